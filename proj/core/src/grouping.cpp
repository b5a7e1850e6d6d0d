#include "upcg/grouping.hpp"

#include "upcg/errors.hpp"

namespace upcg {

GroupingScheme
GroupingScheme::uneven()
{
  GroupingScheme s;
  // Octant 0: parent parity decides the sub-stage.
  constexpr uint8_t kOctant0[8] = {
    1,  // (0,0,0)
    2,  // (0,0,1)
    3,  // (0,1,0)
    2,  // (0,1,1)
    2,  // (1,0,0)
    3,  // (1,0,1)
    2,  // (1,1,0)
    1,  // (1,1,1)
  };
  constexpr uint8_t kOther[8] = {0, 7, 7, 5, 8, 5, 6, 4};
  for (int q = 0; q < 8; ++q) {
    s.stageOf[0][q] = kOctant0[q];
    for (int o = 1; o < 8; ++o)
      s.stageOf[o][q] = kOther[o];
  }
  s.groupOf = {0, 1, 1, 1, 2, 3, 4, 5, 6};
  return s;
}

GroupingScheme
GroupingScheme::sequential()
{
  GroupingScheme s;
  for (int o = 0; o < 8; ++o)
    for (int q = 0; q < 8; ++q)
      s.stageOf[o][q] = uint8_t(o + 1);
  s.groupOf = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  return s;
}

void
GroupingScheme::validate() const
{
  std::array<bool, kNumStages + 1> used{};
  for (const auto& row : stageOf) {
    for (uint8_t st : row) {
      if (st < 1 || st > kNumStages)
        fail(ErrorCode::kInvalidArgument, "grouping scheme has an unassigned cell");
      used[st] = true;
    }
  }
  for (int st = 1; st <= kNumStages; ++st)
    if (!used[st])
      fail(ErrorCode::kInvalidArgument, "grouping scheme leaves stage " + std::to_string(st)
           + " empty");
}

std::string
GroupingScheme::name() const
{
  if (stageOf == uneven().stageOf)
    return "uneven";
  if (stageOf == sequential().stageOf)
    return "sequential";
  return "custom";
}

GroupingScheme
GroupingScheme::byName(const std::string& name)
{
  if (name == "uneven")
    return uneven();
  if (name == "sequential")
    return sequential();
  fail(ErrorCode::kInvalidArgument, "unknown grouping scheme '" + name + "'");
}

std::vector<uint8_t>
assignStages(std::span<const VoxelCoord> ppov, const GroupingScheme& scheme)
{
  std::vector<uint8_t> out(ppov.size());
  for (size_t i = 0; i < ppov.size(); ++i)
    out[i] = uint8_t(scheme.stage(ppov[i]));
  return out;
}

}  // namespace upcg
