#pragma once

#include "upcg/cloud.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace upcg {

enum class SynthKind { kSphereShell, kBoxFaces, kTorus, kPlanarPatches, kSponge };

const std::vector<SynthKind>& allSynthKinds();
std::string synthKindName(SynthKind kind);
SynthKind synthKindFromName(const std::string& name);

// Deterministic surface-like voxel set for (kind, depth, seed). Surfaces are
// rasterized as the voxels whose centre lies within half a voxel of the
// shape (box faces are enumerated exactly).
CoordSet synthCloud(SynthKind kind, int depth, uint64_t seed);

// Cloud i of a corpus cycles through the five kinds with seed base + i.
std::vector<VoxelCloud> synthCorpus(int count, int depth, uint64_t seedBase);

}  // namespace upcg
