#pragma once

#include "upcg/cloud.hpp"
#include "upcg/grouping.hpp"
#include "upcg/layers.hpp"
#include "upcg/range_coder.hpp"

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace upcg {

struct UelcConfig {
  int kernel = 5;
  int width = 16;
  int trunkBlocks = 3;
  int stageBlocks = 3;  // IRN blocks in each of the two stage FELs
  GroupingScheme scheme = GroupingScheme::uneven();
};

// Parameters of the staged lossless coder. One trunk (FEL at the parent
// scale followed by USL) feeds eight independent stage networks; all of
// them are shared across scales.
struct UelcModel {
  struct StageNet {
    FelParams fel1;  // width + 1 -> width (decoded-flag channel appended)
    FelParams fel2;
    ConvParams opg;
  };

  std::string prefix;
  UelcConfig config;
  FelParams trunk;
  ConvParams usl;
  std::array<StageNet, kNumStages> stages;
  int schemeTensor = -1;

  static UelcModel add(ParamStore& store, const std::string& prefix, const UelcConfig& cfg,
                       Rng& rng);
  static UelcModel find(const ParamStore& store, const std::string& prefix);

  // Trainable tensors (the stored grouping table excluded).
  std::vector<int> trainable(const ParamStore& store) const;

  // Sets every stage-network tensor to zero, giving p = 1/2 everywhere.
  void zeroStages(ParamStore& store) const;
};

//============================================================================

struct StageRate {
  uint64_t symbols = 0;
  double idealBits = 0.0;
};

struct ScaleRate {
  int scale = 0;  // child scale of the transition
  std::array<StageRate, kNumStages> stages{};
  uint64_t payloadBytes = 0;

  uint64_t symbols() const;
  double idealBits() const;
};

struct RateReport {
  std::vector<ScaleRate> scales;

  uint64_t symbols() const;
  double idealBits() const;
  uint64_t payloadBytes() const;
  size_t numStreams() const { return scales.size(); }
};

// Sum of -log2 P(symbol) under the quantized probabilities of P(1).
double estimateRate(std::span<const uint16_t> p16, std::span<const uint8_t> symbols);

//============================================================================

// Everything both sides know about one scale transition before coding.
struct ScalePlan {
  CoordSet parents;
  std::shared_ptr<const UpsampleMap> up;  // up->children is the PPOV
  std::vector<uint8_t> stage;             // per PPOV row
  std::array<std::vector<int32_t>, kNumStages + 1> rows;  // PPOV rows per stage

  const CoordSet& ppov() const { return up->children; }
};

ScalePlan planScale(CoordSet parents, const GroupingScheme& scheme, int childDepth = -1);

// Stage-by-stage probability evaluation over one transition. occupied[i]
// must hold the true occupancy of every PPOV row of earlier stages when
// stage t is queried; rows of stage t and later are never read.
class StageEvaluator {
public:
  StageEvaluator(const ParamStore& store, const UelcModel& model, const ScalePlan& plan);

  // Occupancy logits for rows[t], in row order.
  std::vector<float> logits(int t, std::span<const uint8_t> occupied);
  std::vector<uint16_t> probabilities(int t, std::span<const uint8_t> occupied);

private:
  const UelcModel* _model;
  const ScalePlan* _plan;
  Tape<float> _tape;
  Tape<float>::Id _features = -1;
};

// Codes the children of `parents` (one binary stream). truth must satisfy
// downsample(truth) == parents.
std::vector<uint8_t> encodeScale(const ParamStore& store, const UelcModel& model,
                                 const CoordSet& parents, const CoordSet& truth,
                                 ScaleRate* rate = nullptr);

CoordSet decodeScale(const ParamStore& store, const UelcModel& model, const CoordSet& parents,
                     std::span<const uint8_t> payload);

// Ideal cost of a transition without running the coder.
ScaleRate estimateScale(const ParamStore& store, const UelcModel& model, const CoordSet& parents,
                        const CoordSet& truth);

//============================================================================

constexpr size_t kMaxBasePoints = 64;

// Finest level (<= top) holding at most kMaxBasePoints voxels.
int chooseBaseScale(const ScalePyramid& pyr, int top);

// Coordinates of levels base..top: raw base coordinates plus one chunk per
// transition.
struct CoordPayload {
  int baseScale = 0;
  CoordSet base;
  std::vector<std::vector<uint8_t>> chunks;
  RateReport report;
};

CoordPayload encodeCoords(const ParamStore& store, const UelcModel& model,
                          const ScalePyramid& pyr, int top);

// Returns the decoded levels baseScale..top (index 0 = baseScale).
std::vector<CoordSet> decodeCoords(const ParamStore& store, const UelcModel& model, int baseScale,
                                   const CoordSet& base,
                                   std::span<const std::vector<uint8_t>> chunks);

//============================================================================

// Training objective over one transition: summed BCE of every stage in
// bits (probabilities unclamped). Builds on the given tape.
template <typename T>
typename Tape<T>::Id uelcTransitionLoss(Tape<T>& tape, const UelcModel& model,
                                        const ScalePlan& plan, std::span<const uint8_t> occupied);

// True occupancy of every PPOV row.
std::vector<uint8_t> occupancyOf(const ScalePlan& plan, const CoordSet& truth);

struct UelcTrainConfig {
  int epochs = 30;
  int batch = 4;
  double lrStart = 8e-4;
  double lrEnd = 5e-5;
  int transitions = 4;  // finest scale transitions used per cloud
  uint64_t seed = 1;
  std::function<void(int epoch, double bitsPerSymbol)> onEpoch;
};

// Minimizes the summed stage BCE over the finest transitions of every
// cloud. Returns the last epoch's mean bits per PPOV symbol. On a
// non-finite loss the parameters are rolled back to the last finished
// epoch and kNumeric is thrown.
double trainUelc(ParamStore& store, const UelcModel& model, std::span<const VoxelCloud> corpus,
                 const UelcTrainConfig& cfg);

// Mean bits per PPOV symbol of the finest transitions (ideal, quantized).
double evaluateUelc(const ParamStore& store, const UelcModel& model,
                    std::span<const VoxelCloud> clouds, int transitions);

}  // namespace upcg
