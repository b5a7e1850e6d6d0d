#pragma once

#include "upcg/sparse.hpp"

#include <string>

namespace upcg {

// A voxelized cloud together with its bit depth per axis.
struct VoxelCloud {
  std::string name;
  int depth = 0;
  CoordSet coords;
};

}  // namespace upcg
