#pragma once

#include "upcg/cloud.hpp"

#include <string>
#include <vector>

namespace upcg::cli {

// Corpus specs:
//   synth:COUNT:DEPTH[:SEED]   COUNT clouds cycling through the synthetic kinds
//   PATH                       a PLY file, or every *.ply in a directory (sorted),
//                              voxelized at `depth`
std::vector<VoxelCloud> loadCorpus(const std::string& spec, int depth);

// Single input for encode: synth:KIND[:SEED] or a PLY path.
VoxelCloud loadInput(const std::string& spec, int depth);

}  // namespace upcg::cli
