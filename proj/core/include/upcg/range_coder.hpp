#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace upcg {

// Probabilities handed to the coder are 16-bit integers: p = p16 / 65536
// with p16 in [1, 65535], so both outcomes always remain codable.
constexpr uint32_t kProbBits = 16;
constexpr uint32_t kProbOne = 1u << kProbBits;

uint16_t quantizeProbability(double p);

// -log2 of the probability the coder assigns to `bit` under p16 = P(1).
double bitCost(int bit, uint16_t p16);

// Byte-oriented range coder with a 56-bit window and carry propagation.
// Binary symbols and 16-bit cumulative-frequency symbols share one stream.
class RangeEncoder {
public:
  void encodeBit(int bit, uint16_t p16);

  // Symbol occupying [cumLo, cumLo + freq) of a 2^16 total.
  void encode(uint32_t cumLo, uint32_t freq);

  // Flushes and returns the stream. The encoder must not be reused.
  std::vector<uint8_t> finish();

private:
  void renormalize();
  void shiftLow();

  uint64_t _low = 0;
  uint64_t _range = (uint64_t(1) << 56) - 1;
  uint8_t _cache = 0;
  uint64_t _cacheSize = 1;
  bool _first = true;
  std::vector<uint8_t> _out;
};

class RangeDecoder {
public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);

  int decodeBit(uint16_t p16);

  // Two-step multi-symbol decoding: target() returns a value in
  // [0, 2^16); the caller maps it to a symbol and calls consume().
  uint32_t target();
  void consume(uint32_t cumLo, uint32_t freq);

  // Verifies the stream was consumed exactly; throws on truncation or
  // trailing bytes.
  void finish() const;

private:
  uint8_t nextByte();
  void renormalize();

  std::span<const uint8_t> _in;
  size_t _pos = 0;
  uint64_t _code = 0;
  uint64_t _range = (uint64_t(1) << 56) - 1;
  uint64_t _scale = 0;
};

}  // namespace upcg
