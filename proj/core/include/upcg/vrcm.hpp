#pragma once

#include "upcg/cloud.hpp"
#include "upcg/factorized.hpp"
#include "upcg/layers.hpp"

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace upcg {

// Piecewise-linear keep ratio of the dynamic convolutions as a function of
// lambda, clamped outside the anchors.
struct RhoMap {
  std::vector<std::pair<double, double>> anchors = {{0.3, 0.25}, {1.0, 0.5}, {3.0, 1.0}};

  double operator()(double lambda) const;
};

struct VrcmConfig {
  int width = 32;
  int latent = 8;
  int kernel = 3;
  int blocks = 3;
  int modHidden = 32;
  double lambdaMin = 0.3;  // trained anchor range; wider values need the unsafe flag
  double lambdaMax = 3.0;
  RhoMap rho;
};

// One-stage occupancy head: USL to all children, DFEL, OPG.
struct DolcParams {
  ConvParams usl;
  DfelParams dfel;
  ConvParams opg;
};

struct VrcmModel {
  std::string prefix;
  VrcmConfig config;

  // analysis: FEL -> Down -> DFEL -> Down -> FEL -> dense to latent
  FelParams encFel1;
  ConvParams encDown1;
  DfelParams encDfel;
  ConvParams encDown2;
  FelParams encFel2;
  ConvParams encOut;
  // modulation: dense 1 -> hidden, relu, dense hidden -> latent, exp
  ConvParams mod1;
  ConvParams mod2;
  // synthesis: USL from the latent, prune to C_i, DFEL, then DOLC
  ConvParams decUsl;
  DfelParams decDfel;
  DolcParams dolc;
  DolcParams up;  // shared by every extra upsampling step
  FactorizedModel entropy;
  int settingsTensor = -1;  // lambda range and rho anchors

  static VrcmModel add(ParamStore& store, const std::string& prefix, const VrcmConfig& cfg,
                       Rng& rng);
  static VrcmModel find(const ParamStore& store, const std::string& prefix);

  std::vector<int> trainable(const ParamStore& store) const;
};

// The lambda accepted by the coder: inside the trained range unless
// `unsafe` is set. Throws kInvalidArgument otherwise.
void checkLambda(const VrcmModel& model, double lambda, bool unsafe);

//============================================================================
// Differentiable pieces, shared by training, gradient checks and the codec.

template <typename T>
using VId = typename Tape<T>::Id;

// y on downsample(downsample(input)).
template <typename T>
VId<T> analysisTransform(Tape<T>& tape, const VrcmModel& m, const CoordSet& input, double rho);

// r_ch = exp(W2 relu(W1 [lambda] + b1) + b2), one row.
template <typename T>
VId<T> modulation(Tape<T>& tape, const VrcmModel& m, double lambda);

// Features on ci from the demodulated latent placed on `latent`.
template <typename T>
VId<T> synthesisFeatures(Tape<T>& tape, const VrcmModel& m, VId<T> yDemod,
                         const CoordSet& latent, const CoordSet& ci, double rho);

template <typename T>
struct DolcOutput {
  VId<T> features;  // over all candidates
  VId<T> logits;
  std::shared_ptr<const UpsampleMap> up;  // up->children are the candidates
};

template <typename T>
DolcOutput<T> dolcForward(Tape<T>& tape, const DolcParams& p, VId<T> feats,
                          const CoordSet& coords, double rho);

// Training objective for one cloud at one lambda:
// lambda * (BCE in nats of every head) + factorized bits of the noisy
// latent, divided by the point count of the finest supervised level.
template <typename T>
struct LossyLoss {
  VId<T> total = -1;
  double bce = 0.0;
  double bits = 0.0;
  int points = 0;
};

struct LossyInstance {
  ScalePyramid pyr;
  int inputScale = 0;  // scale fed to the analysis transform
  int upSteps = 0;     // supervised extra upsampling steps above it
};

LossyInstance makeLossyInstance(const VoxelCloud& cloud, int n, int upSteps);

template <typename T>
LossyLoss<T> vrcmLoss(Tape<T>& tape, const VrcmModel& m, const LossyInstance& inst,
                      double lambda, double rho, const Mat<T>& noise);

// Latent row count of an instance (noise shape is rows x latent).
int latentRows(const LossyInstance& inst);

//============================================================================

// The k highest-scoring candidates, ties by canonical order; returned in
// canonical order.
CoordSet reconstructTopK(std::span<const double> scores, const CoordSet& candidates, size_t k);

std::vector<float> modulationVector(const ParamStore& store, const VrcmModel& m, double lambda);

struct LatentCode {
  CoordSet coords;
  Mat<int32_t> values;
};

// Analysis, modulation and rounding on `input` (the pre-downsampled cloud).
LatentCode encodeLatent(const ParamStore& store, const VrcmModel& m, const CoordSet& input,
                        double lambda, double rho, uint64_t* macs = nullptr);

// Synthesis from the latent and C_i, then top-k reconstruction of each level
// listed in `counts` (one entry per finer level, coarsest first). Returns
// the reconstructed levels.
std::vector<CoordSet> reconstructLossy(const ParamStore& store, const VrcmModel& m,
                                       const LatentCode& latent, const CoordSet& ci,
                                       std::span<const uint32_t> counts, double lambda,
                                       double rho, uint64_t* macs = nullptr);

//============================================================================

struct VrcmTrainConfig {
  int stage1Epochs = 4;
  int stage2Epochs = 4;
  int stage3Epochs = 8;
  double lambda1 = 0.1;
  double lambda2 = 1.0;
  std::vector<double> anchors = {0.3, 3.0};
  int batch = 4;
  double lrStart = 8e-4;
  double lrEnd = 5e-5;
  int inputDownsample = 1;  // clouds are analysed one scale down ...
  int upSteps = 1;          // ... and the shared upsampling head is supervised
  uint64_t seed = 1;
  std::function<void(int stage, int epoch, double loss)> onEpoch;
};

// Three stages: lambda1 alone, lambda2 alone, then the sum over the anchor
// set. Support bounds of the entropy model are refreshed at the end.
double trainVrcm(ParamStore& store, const VrcmModel& m, std::span<const VoxelCloud> corpus,
                 const VrcmTrainConfig& cfg);

// One optimizer step over `batch` at the given lambda set (exposed for
// descent checks). Returns the summed loss before the step.
double vrcmStep(ParamStore& store, const VrcmModel& m, Adam& adam,
                std::span<const LossyInstance> batch, std::span<const double> lambdas,
                double lr, Rng& rng);

}  // namespace upcg
