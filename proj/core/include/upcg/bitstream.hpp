#pragma once

#include "upcg/sparse.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace upcg {

constexpr char kStreamMagic[4] = {'U', 'P', 'C', 'G'};
constexpr uint8_t kStreamVersion = 1;

enum class CodingMode : uint8_t { kLossless = 0, kLossy = 1 };

struct BitstreamHeader {
  uint8_t version = kStreamVersion;
  CodingMode mode = CodingMode::kLossless;
  uint8_t depth = 0;
  uint8_t n = 0;         // pre-downsampling steps (lossy)
  float lambda = 0.0f;   // rate factor (lossy)
  float rho = 0.0f;      // keep ratio of the dynamic convolutions (lossy)
  uint64_t modelId = 0;
  uint8_t baseScale = 0;
  // Point counts of scales baseScale .. depth.
  std::vector<uint32_t> counts;
  // Raw coordinates of the base scale (baseScale bits per axis).
  CoordSet base;

  uint32_t count(int scale) const { return counts.at(size_t(scale - baseScale)); }
  friend bool operator==(const BitstreamHeader&, const BitstreamHeader&) = default;
};

// Header followed by a u8 chunk count and length-prefixed chunks.
struct Bitstream {
  BitstreamHeader header;
  std::vector<std::vector<uint8_t>> chunks;
};

std::vector<uint8_t> serializeBitstream(const Bitstream& stream);

// Validates magic, version, header fields and every chunk length before
// returning any payload.
Bitstream parseBitstream(std::span<const uint8_t> bytes);

// Size of the serialized header (everything before the chunk count).
size_t headerSize(const BitstreamHeader& header);

// Packs coordinates at `bits` bits per axis, MSB first, zero padded.
std::vector<uint8_t> packCoords(std::span<const VoxelCoord> coords, int bits);
CoordSet unpackCoords(std::span<const uint8_t> bytes, size_t count, int bits);

}  // namespace upcg
