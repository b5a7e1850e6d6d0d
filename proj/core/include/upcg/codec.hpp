#pragma once

#include "upcg/bitstream.hpp"
#include "upcg/uelc.hpp"
#include "upcg/vrcm.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace upcg {

// A checkpoint with whichever coders it contains. Lossless coding needs the
// staged coder ("uelc.*"); lossy coding needs both it and "vrcm.*".
struct CodecModel {
  ParamStore store;
  std::optional<UelcModel> uelc;
  std::optional<VrcmModel> vrcm;

  static CodecModel fromStore(ParamStore store);
  static CodecModel load(const std::string& path);

  uint64_t id() const { return store.modelId(); }
};

struct StreamStats {
  size_t points = 0;       // input points
  size_t totalBytes = 0;
  size_t headerBytes = 0;  // header and chunk count
  size_t coordBytes = 0;   // coordinate chunks with their length fields
  size_t featureBytes = 0; // feature chunk with its length field
  RateReport coords;       // per-scale, per-stage ideal bits of the coordinate chunks
  double featureModelBits = 0.0;  // factorized-model bits of the rounded latent
  uint64_t macs = 0;

  double bpp() const { return points ? 8.0 * double(totalBytes) / double(points) : 0.0; }
};

struct LossyParams {
  double lambda = 1.0;
  int n = 0;
  std::optional<double> rho;  // overrides the model's lambda -> rho map
  bool unsafeLambda = false;
};

std::vector<uint8_t> encodeLossless(const CodecModel& model, const CoordSet& cloud, int depth,
                                    StreamStats* stats = nullptr);

std::vector<uint8_t> encodeLossy(const CodecModel& model, const CoordSet& cloud, int depth,
                                 const LossyParams& params, StreamStats* stats = nullptr);

struct DecodedStream {
  BitstreamHeader header;
  CoordSet cloud;
  CoordSet ci;             // lossy: losslessly coded scale
  CoordSet latentCoords;   // lossy: downsample(ci)
  std::vector<CoordSet> reconstructed;  // lossy: top-k levels above ci, coarsest first
  uint64_t macs = 0;
};

// Checks the model id before touching any payload.
DecodedStream decodeStream(const CodecModel& model, std::span<const uint8_t> bytes);

}  // namespace upcg
