#include "upcg/sparse.hpp"

#include "upcg/errors.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace upcg {

void
canonicalize(CoordSet& coords)
{
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
}

bool
isCanonical(std::span<const VoxelCoord> coords)
{
  for (size_t i = 1; i < coords.size(); ++i)
    if (!(coords[i - 1] < coords[i]))
      return false;
  return true;
}

bool
coordsFit(std::span<const VoxelCoord> coords, int depth)
{
  const int32_t limit = int32_t(1) << depth;
  for (const auto& c : coords) {
    if (c.x < 0 || c.y < 0 || c.z < 0)
      return false;
    if (c.x >= limit || c.y >= limit || c.z >= limit)
      return false;
  }
  return true;
}

CoordSet
downsample(std::span<const VoxelCoord> coords)
{
  CoordSet out;
  out.reserve(coords.size());
  for (const auto& c : coords)
    out.push_back(parentOf(c));
  canonicalize(out);
  return out;
}

CoordSet
expandChildren(std::span<const VoxelCoord> parents, int childDepth)
{
  return buildUpsampleMap(parents, childDepth).children;
}

std::vector<int32_t>
lookupRows(std::span<const VoxelCoord> coords, std::span<const VoxelCoord> queries)
{
  std::vector<int32_t> rows(queries.size(), -1);
  if (isCanonical(queries)) {
    size_t j = 0;
    for (size_t i = 0; i < queries.size(); ++i) {
      while (j < coords.size() && coords[j] < queries[i])
        ++j;
      if (j < coords.size() && coords[j] == queries[i])
        rows[i] = int32_t(j);
    }
    return rows;
  }
  CoordIndex index(coords);
  for (size_t i = 0; i < queries.size(); ++i)
    rows[i] = index.find(queries[i]);
  return rows;
}

CoordIndex::CoordIndex(std::span<const VoxelCoord> coords)
{
  _map.reserve(coords.size());
  for (size_t i = 0; i < coords.size(); ++i)
    _map.emplace(coordKey(coords[i]), int32_t(i));
}

//============================================================================

VoxelCoord
kernelOffset(int kernel, int offsetIndex)
{
  const int r = kernel / 2;
  const int dz = offsetIndex % kernel;
  const int dy = (offsetIndex / kernel) % kernel;
  const int dx = offsetIndex / (kernel * kernel);
  return {dx - r, dy - r, dz - r};
}

KernelMap
kernelGather(std::span<const VoxelCoord> coords, int kernel)
{
  if (kernel != 1 && kernel != 3 && kernel != 5)
    fail(ErrorCode::kInvalidArgument, "kernelGather: unsupported kernel " + std::to_string(kernel));

  const int n = int(coords.size());
  std::vector<uint64_t> keys(n);
  for (int i = 0; i < n; ++i)
    keys[i] = coordKey(coords[i]);

  // Translation preserves the lexicographic order, and z is the least
  // significant key component, so for a fixed (dx, dy) the k candidate
  // neighbours of point i are k consecutive keys. One merge per (dx, dy)
  // finds all of them.
  const int r = kernel / 2;
  auto forEachMatch = [&](auto&& fn) {
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        const int64_t delta = offsetKeyDelta({dx, dy, -r});
        const int base = ((dx + r) * kernel + (dy + r)) * kernel;
        int j = 0;
        for (int i = 0; i < n; ++i) {
          const uint64_t lo = uint64_t(int64_t(keys[i]) + delta);
          while (j < n && keys[j] < lo)
            ++j;
          if (j == n)
            break;
          for (int m = j; m < n && keys[m] <= lo + uint64_t(2 * r); ++m)
            fn(i, base + int(keys[m] - lo), m);
        }
      }
    }
  };

  KernelMap map;
  map.kernel = kernel;
  map.rowStart.assign(n + 1, 0);
  forEachMatch([&](int i, int, int) { ++map.rowStart[i + 1]; });
  for (int i = 0; i < n; ++i)
    map.rowStart[i + 1] += map.rowStart[i];

  map.offset.resize(map.rowStart[n]);
  map.input.resize(map.rowStart[n]);
  std::vector<int32_t> fill(map.rowStart.begin(), map.rowStart.end() - 1);
  forEachMatch([&](int i, int o, int j) {
    const int32_t e = fill[i]++;
    map.offset[e] = o;
    map.input[e] = j;
  });
  return map;
}

KernelMap
restrictKernelMap(const KernelMap& map, std::span<const int32_t> rows)
{
  std::vector<int32_t> local(map.numRows(), -1);
  for (size_t i = 0; i < rows.size(); ++i)
    local[rows[i]] = int32_t(i);

  KernelMap out;
  out.kernel = map.kernel;
  out.rowStart.assign(rows.size() + 1, 0);
  for (size_t i = 0; i < rows.size(); ++i) {
    int32_t count = 0;
    for (int32_t e = map.rowStart[rows[i]]; e < map.rowStart[rows[i] + 1]; ++e)
      count += local[map.input[e]] >= 0;
    out.rowStart[i + 1] = out.rowStart[i] + count;
  }
  out.offset.resize(size_t(out.rowStart.back()));
  out.input.resize(size_t(out.rowStart.back()));
  size_t k = 0;
  for (int32_t r : rows)
    for (int32_t e = map.rowStart[r]; e < map.rowStart[r + 1]; ++e) {
      const int32_t j = local[map.input[e]];
      if (j < 0)
        continue;
      out.offset[k] = map.offset[e];
      out.input[k] = j;
      ++k;
    }
  return out;
}

UpsampleMap
buildUpsampleMap(std::span<const VoxelCoord> parents, int childDepth)
{
  if (childDepth >= 0) {
    if (childDepth > kMaxDepth || childDepth < 1 || !coordsFit(parents, childDepth - 1))
      fail(ErrorCode::kInvalidArgument, "expandChildren: children exceed depth "
           + std::to_string(childDepth));
  }

  struct Entry {
    uint64_t key;
    int32_t parent;
    uint8_t octant;
  };
  std::vector<Entry> entries;
  entries.reserve(parents.size() * 8);
  for (size_t p = 0; p < parents.size(); ++p) {
    const VoxelCoord base{parents[p].x * 2, parents[p].y * 2, parents[p].z * 2};
    for (int o = 0; o < 8; ++o)
      entries.push_back({coordKey(base + octantOffset(o)), int32_t(p), uint8_t(o)});
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.key < b.key; });

  UpsampleMap map;
  map.children.reserve(entries.size());
  map.parent.reserve(entries.size());
  map.octant.reserve(entries.size());
  for (const auto& e : entries) {
    const VoxelCoord& p = parents[e.parent];
    map.children.push_back(
      VoxelCoord{p.x * 2, p.y * 2, p.z * 2} + octantOffset(e.octant));
    map.parent.push_back(e.parent);
    map.octant.push_back(e.octant);
  }
  return map;
}

DownsampleMap
buildDownsampleMap(std::span<const VoxelCoord> children)
{
  DownsampleMap map;
  map.parents = downsample(children);
  CoordIndex index(map.parents);
  map.parent.resize(children.size());
  map.octant.resize(children.size());
  for (size_t i = 0; i < children.size(); ++i) {
    map.parent[i] = index.find(parentOf(children[i]));
    map.octant[i] = uint8_t(octantOf(children[i]));
  }
  return map;
}

//============================================================================

SparseTensor
makeSparseTensor(int scale, CoordSet coords, Mat<float> feats)
{
  if (feats.rows != int(coords.size()))
    fail(ErrorCode::kInvalidArgument, "makeSparseTensor: row count mismatch");

  std::vector<int32_t> order(coords.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int32_t a, int32_t b) { return coords[a] < coords[b]; });

  SparseTensor t;
  t.scale = scale;
  t.coords.resize(coords.size());
  t.feats = Mat<float>(feats.rows, feats.cols);
  for (size_t i = 0; i < order.size(); ++i) {
    t.coords[i] = coords[order[i]];
    if (i > 0 && t.coords[i] == t.coords[i - 1])
      fail(ErrorCode::kInvalidArgument, "makeSparseTensor: duplicate coordinate");
    std::copy_n(feats.row(order[i]), feats.cols, t.feats.row(int(i)));
  }
  return t;
}

SparseTensor
prune(const SparseTensor& t, std::span<const VoxelCoord> keep)
{
  CoordSet sortedKeep(keep.begin(), keep.end());
  canonicalize(sortedKeep);
  const auto rows = lookupRows(t.coords, sortedKeep);

  SparseTensor out;
  out.scale = t.scale;
  out.coords = sortedKeep;
  out.feats = Mat<float>(int(rows.size()), t.feats.cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0)
      fail(ErrorCode::kInvalidArgument, "prune: keep set contains a coordinate absent from tensor");
    std::copy_n(t.feats.row(rows[i]), t.feats.cols, out.feats.row(int(i)));
  }
  return out;
}

//============================================================================

std::vector<uint32_t>
ScalePyramid::counts() const
{
  std::vector<uint32_t> out;
  out.reserve(levels.size());
  for (const auto& l : levels)
    out.push_back(uint32_t(l.size()));
  return out;
}

ScalePyramid
buildPyramid(const CoordSet& cloud, int depth)
{
  if (depth < 0 || depth > kMaxDepth)
    fail(ErrorCode::kInvalidArgument, "buildPyramid: depth out of range");
  if (!coordsFit(cloud, depth))
    fail(ErrorCode::kInvalidArgument, "buildPyramid: coordinates exceed depth");

  ScalePyramid pyr;
  pyr.depth = depth;
  pyr.levels.resize(depth + 1);
  pyr.levels[depth] = cloud;
  canonicalize(pyr.levels[depth]);
  for (int s = depth; s > 0; --s)
    pyr.levels[s - 1] = downsample(pyr.levels[s]);
  return pyr;
}

}  // namespace upcg
