#include "upcg/voxelize.hpp"

#include "upcg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace upcg {

Point3
VoxelTransform::toWorld(const VoxelCoord& c) const
{
  return {double(c.x) / scale + offset[0], double(c.y) / scale + offset[1],
          double(c.z) / scale + offset[2]};
}

Voxelized
voxelize(std::span<const Point3> points, int depth)
{
  if (depth < 1 || depth > kMaxDepth)
    fail(ErrorCode::kInvalidArgument, "voxelize: depth out of range");
  if (points.empty())
    fail(ErrorCode::kInvalidArgument, "voxelize: empty point list");

  const double top = std::ldexp(1.0, depth) - 1.0;
  Point3 lo{INFINITY, INFINITY, INFINITY};
  Point3 hi{-INFINITY, -INFINITY, -INFINITY};
  bool integral = true;
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(p[a]))
        fail(ErrorCode::kInvalidArgument, "voxelize: non-finite coordinate");
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
      integral = integral && p[a] == std::floor(p[a]);
    }
  }

  Voxelized out;
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  if (integral && lo[0] >= 0 && lo[1] >= 0 && lo[2] >= 0 && hi[0] <= top && hi[1] <= top
      && hi[2] <= top) {
    // identity
  } else if (extent == 0.0) {
    out.transform.offset = lo;
  } else {
    out.transform.offset = lo;
    out.transform.scale = top / extent;
  }

  const auto& t = out.transform;
  out.coords.reserve(points.size());
  for (const auto& p : points) {
    int32_t c[3];
    for (int a = 0; a < 3; ++a) {
      const double v = std::round((p[a] - t.offset[a]) * t.scale);
      c[a] = int32_t(std::clamp(v, 0.0, top));
    }
    out.coords.push_back({c[0], c[1], c[2]});
  }
  canonicalize(out.coords);
  return out;
}

std::vector<Point3>
devoxelize(std::span<const VoxelCoord> coords, const VoxelTransform& t)
{
  std::vector<Point3> out;
  out.reserve(coords.size());
  for (const auto& c : coords)
    out.push_back(t.toWorld(c));
  return out;
}

std::vector<Point3>
toPoints(std::span<const VoxelCoord> coords)
{
  return devoxelize(coords, VoxelTransform{});
}

}  // namespace upcg
