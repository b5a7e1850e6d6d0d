#pragma once

#include "upcg/sparse.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace upcg {

constexpr int kNumStages = 8;

// Assigns every child voxel a coding stage from its octant inside the
// parent and the parity of the parent coordinate. Parity q uses the same
// bit layout as octants (bit2 = x, bit1 = y, bit0 = z).
struct GroupingScheme {
  std::array<std::array<uint8_t, 8>, 8> stageOf{};  // [octant][parity] -> 1..8
  std::array<uint8_t, kNumStages + 1> groupOf{};    // stage -> top-level group

  // Uneven, non-sequential default: octant 0 split three ways by parent
  // parity, then octants 7 | 3,5 | 6 | 1,2 | 4.
  static GroupingScheme uneven();
  // One octant per stage in index order (ablation baseline).
  static GroupingScheme sequential();

  int stage(const VoxelCoord& child) const
  {
    return stageOf[octantOf(child)][octantOf(parentOf(child))];
  }

  // Throws kInvalidArgument unless every cell maps to a stage in 1..8 and
  // every stage is used.
  void validate() const;

  std::string name() const;
  static GroupingScheme byName(const std::string& name);
};

std::vector<uint8_t> assignStages(std::span<const VoxelCoord> ppov, const GroupingScheme& scheme);

}  // namespace upcg
