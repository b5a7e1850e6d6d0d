#pragma once

#include "upcg/matrix.hpp"

#include <absl/container/flat_hash_map.h>

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace upcg {

constexpr int kMaxDepth = 12;

struct VoxelCoord {
  int32_t x = 0;
  int32_t y = 0;
  int32_t z = 0;

  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;

  VoxelCoord operator+(const VoxelCoord& o) const
  {
    return {x + o.x, y + o.y, z + o.z};
  }
};

// A coordinate set is always kept sorted (x, then y, then z) and unique.
using CoordSet = std::vector<VoxelCoord>;

// Child position inside its parent: bit2 = x, bit1 = y, bit0 = z.
inline int
octantOf(const VoxelCoord& c)
{
  return ((c.x & 1) << 2) | ((c.y & 1) << 1) | (c.z & 1);
}

inline VoxelCoord
octantOffset(int o)
{
  return {(o >> 2) & 1, (o >> 1) & 1, o & 1};
}

inline VoxelCoord
parentOf(const VoxelCoord& c)
{
  return {c.x >> 1, c.y >> 1, c.z >> 1};
}

// Order-preserving 64-bit key. Components are biased so that small
// negative offsets stay representable and key(c + d) = key(c) + delta(d).
constexpr int kKeyBias = 16;

inline uint64_t
coordKey(const VoxelCoord& c)
{
  return (uint64_t(c.x + kKeyBias) << 42) | (uint64_t(c.y + kKeyBias) << 21)
    | uint64_t(c.z + kKeyBias);
}

inline int64_t
offsetKeyDelta(const VoxelCoord& d)
{
  return (int64_t(d.x) << 42) + (int64_t(d.y) << 21) + int64_t(d.z);
}

// Sorts and deduplicates in place.
void canonicalize(CoordSet& coords);
bool isCanonical(std::span<const VoxelCoord> coords);

// Every component lies in [0, 2^depth).
bool coordsFit(std::span<const VoxelCoord> coords, int depth);

CoordSet downsample(std::span<const VoxelCoord> coords);

// All 8 children of every parent. Throws if the children would not fit
// in `childDepth` bits per axis (pass -1 to skip the check).
CoordSet expandChildren(std::span<const VoxelCoord> parents, int childDepth = -1);

// Index of each query in `coords` (which must be canonical), or -1.
std::vector<int32_t>
lookupRows(std::span<const VoxelCoord> coords, std::span<const VoxelCoord> queries);

//============================================================================
// Hash index over a canonical coordinate array.

class CoordIndex {
public:
  CoordIndex() = default;
  explicit CoordIndex(std::span<const VoxelCoord> coords);

  int32_t find(const VoxelCoord& c) const
  {
    auto it = _map.find(coordKey(c));
    return it == _map.end() ? -1 : it->second;
  }

  bool contains(const VoxelCoord& c) const { return find(c) >= 0; }
  size_t size() const { return _map.size(); }

private:
  absl::flat_hash_map<uint64_t, int32_t> _map;
};

//============================================================================
// Neighbour lists for stride-1 sparse convolution, stored CSR by output row.
// Entries within a row are ordered by offset index, which is
// ((dx + r) * k + (dy + r)) * k + (dz + r) with r = k / 2.

struct KernelMap {
  int kernel = 0;
  std::vector<int32_t> rowStart;  // numRows + 1
  std::vector<int32_t> offset;
  std::vector<int32_t> input;

  int numRows() const { return rowStart.empty() ? 0 : int(rowStart.size()) - 1; }
  size_t numPairs() const { return input.size(); }
  int numOffsets() const { return kernel * kernel * kernel; }
  int centerOffset() const { return numOffsets() / 2; }
};

VoxelCoord kernelOffset(int kernel, int offsetIndex);

KernelMap kernelGather(std::span<const VoxelCoord> coords, int kernel);

// Restricts a map to the pairs whose output and input both belong to
// `rows` (sorted row indices). The result is indexed by position in `rows`.
KernelMap restrictKernelMap(const KernelMap& map, std::span<const int32_t> rows);

// Parent -> children map of a stride-2 transposed convolution.
struct UpsampleMap {
  CoordSet children;
  std::vector<int32_t> parent;
  std::vector<uint8_t> octant;
};

UpsampleMap buildUpsampleMap(std::span<const VoxelCoord> parents, int childDepth = -1);

// Children -> parent map of a stride-2 convolution.
struct DownsampleMap {
  CoordSet parents;
  std::vector<int32_t> parent;
  std::vector<uint8_t> octant;
};

DownsampleMap buildDownsampleMap(std::span<const VoxelCoord> children);

//============================================================================

struct SparseTensor {
  int scale = 0;
  CoordSet coords;
  Mat<float> feats;

  int size() const { return int(coords.size()); }
  int channels() const { return feats.cols; }
};

// Builds a tensor from unordered rows; rows are sorted into canonical order
// and duplicate coordinates are rejected.
SparseTensor makeSparseTensor(int scale, CoordSet coords, Mat<float> feats);

// Rows of `t` whose coordinate is in `keep`, order preserved. Every kept
// coordinate must exist in `t`.
SparseTensor prune(const SparseTensor& t, std::span<const VoxelCoord> keep);

//============================================================================

struct ScalePyramid {
  int depth = 0;
  // levels[s] holds the occupied voxels at s bits per axis.
  std::vector<CoordSet> levels;

  std::vector<uint32_t> counts() const;
};

ScalePyramid buildPyramid(const CoordSet& cloud, int depth);

}  // namespace upcg
