#pragma once

#include "upcg/ply.hpp"
#include "upcg/sparse.hpp"

#include <span>
#include <vector>

namespace upcg {

// voxel = round((p - offset) * scale); devoxelization inverts it.
struct VoxelTransform {
  Point3 offset{0.0, 0.0, 0.0};
  double scale = 1.0;

  bool identity() const { return scale == 1.0 && offset == Point3{0.0, 0.0, 0.0}; }
  Point3 toWorld(const VoxelCoord& c) const;
};

struct Voxelized {
  CoordSet coords;
  VoxelTransform transform;
};

// Clouds whose points are already integers inside [0, 2^depth - 1] keep
// the identity transform. Anything else is shifted to its min corner and
// scaled uniformly so the largest extent spans 2^depth - 1. All points
// identical gives one voxel with scale 1.
Voxelized voxelize(std::span<const Point3> points, int depth);

std::vector<Point3> devoxelize(std::span<const VoxelCoord> coords, const VoxelTransform& t);

std::vector<Point3> toPoints(std::span<const VoxelCoord> coords);

}  // namespace upcg
