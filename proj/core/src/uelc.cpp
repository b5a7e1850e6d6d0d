#include "upcg/uelc.hpp"

#include "upcg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace upcg {

namespace {

std::string
stageName(const std::string& prefix, int t)
{
  return prefix + ".stage" + std::to_string(t);
}

}  // namespace

UelcModel
UelcModel::add(ParamStore& store, const std::string& prefix, const UelcConfig& cfg, Rng& rng)
{
  cfg.scheme.validate();
  UelcModel m;
  m.prefix = prefix;
  m.config = cfg;
  m.trunk = addFel(store, prefix + ".trunk", 1, cfg.width, cfg.kernel, cfg.trunkBlocks, rng);
  m.usl = addConv(store, prefix + ".usl", 8, cfg.width, cfg.width, rng);
  for (int t = 1; t <= kNumStages; ++t) {
    auto& s = m.stages[t - 1];
    const std::string name = stageName(prefix, t);
    s.fel1 = addFel(store, name + ".fel1", cfg.width + 1, cfg.width, cfg.kernel, cfg.stageBlocks,
                    rng);
    s.fel2 = addFel(store, name + ".fel2", cfg.width, cfg.width, cfg.kernel, cfg.stageBlocks, rng);
    s.opg = addConv(store, name + ".opg", 1, cfg.width, 1, rng);
  }
  m.schemeTensor = store.add(prefix + ".scheme", {8, 8});
  auto& table = store[m.schemeTensor].values;
  for (int o = 0; o < 8; ++o)
    for (int q = 0; q < 8; ++q)
      table[o * 8 + q] = float(cfg.scheme.stageOf[o][q]);
  return m;
}

UelcModel
UelcModel::find(const ParamStore& store, const std::string& prefix)
{
  UelcModel m;
  m.prefix = prefix;
  m.trunk = findFel(store, prefix + ".trunk");
  m.usl = findConv(store, prefix + ".usl");
  for (int t = 1; t <= kNumStages; ++t) {
    auto& s = m.stages[t - 1];
    const std::string name = stageName(prefix, t);
    s.fel1 = findFel(store, name + ".fel1");
    s.fel2 = findFel(store, name + ".fel2");
    s.opg = findConv(store, name + ".opg");
  }
  m.schemeTensor = store.index(prefix + ".scheme");
  const auto& table = store[m.schemeTensor].values;
  if (table.size() != 64)
    fail(ErrorCode::kModelMismatch, "grouping table has the wrong size");
  GroupingScheme scheme;
  for (int o = 0; o < 8; ++o)
    for (int q = 0; q < 8; ++q)
      scheme.stageOf[o][q] = uint8_t(table[o * 8 + q]);
  scheme.groupOf = scheme.stageOf == GroupingScheme::uneven().stageOf
    ? GroupingScheme::uneven().groupOf
    : GroupingScheme::sequential().groupOf;
  scheme.validate();

  m.config.kernel = m.trunk.kernel;
  m.config.width = m.trunk.width;
  m.config.trunkBlocks = int(m.trunk.blocks.size());
  m.config.stageBlocks = int(m.stages[0].fel1.blocks.size());
  m.config.scheme = scheme;
  return m;
}

std::vector<int>
UelcModel::trainable(const ParamStore& store) const
{
  auto all = store.withPrefix(prefix + ".");
  std::erase(all, schemeTensor);
  return all;
}

void
UelcModel::zeroStages(ParamStore& store) const
{
  for (int i : store.withPrefix(prefix + ".stage"))
    std::fill(store[i].values.begin(), store[i].values.end(), 0.0f);
}

//============================================================================

uint64_t
ScaleRate::symbols() const
{
  uint64_t n = 0;
  for (const auto& s : stages)
    n += s.symbols;
  return n;
}

double
ScaleRate::idealBits() const
{
  double b = 0.0;
  for (const auto& s : stages)
    b += s.idealBits;
  return b;
}

uint64_t
RateReport::symbols() const
{
  uint64_t n = 0;
  for (const auto& s : scales)
    n += s.symbols();
  return n;
}

double
RateReport::idealBits() const
{
  double b = 0.0;
  for (const auto& s : scales)
    b += s.idealBits();
  return b;
}

uint64_t
RateReport::payloadBytes() const
{
  uint64_t n = 0;
  for (const auto& s : scales)
    n += s.payloadBytes;
  return n;
}

double
estimateRate(std::span<const uint16_t> p16, std::span<const uint8_t> symbols)
{
  if (p16.size() != symbols.size())
    fail(ErrorCode::kInvalidArgument, "estimateRate: length mismatch");
  double bits = 0.0;
  for (size_t i = 0; i < p16.size(); ++i)
    bits += bitCost(symbols[i], p16[i]);
  return bits;
}

//============================================================================

ScalePlan
planScale(CoordSet parents, const GroupingScheme& scheme, int childDepth)
{
  ScalePlan plan;
  plan.up = std::make_shared<const UpsampleMap>(buildUpsampleMap(parents, childDepth));
  plan.parents = std::move(parents);
  plan.stage = assignStages(plan.ppov(), scheme);
  for (size_t i = 0; i < plan.stage.size(); ++i)
    plan.rows[plan.stage[i]].push_back(int32_t(i));
  return plan;
}

std::vector<uint8_t>
occupancyOf(const ScalePlan& plan, const CoordSet& truth)
{
  std::vector<uint8_t> occ(plan.ppov().size(), 0);
  const auto rows = lookupRows(plan.ppov(), truth);
  for (int32_t r : rows) {
    if (r < 0)
      fail(ErrorCode::kInvalidArgument, "child scale holds a voxel outside the parent set");
    occ[r] = 1;
  }
  std::vector<uint8_t> hasChild(plan.parents.size(), 0);
  for (size_t i = 0; i < occ.size(); ++i)
    hasChild[plan.up->parent[i]] |= occ[i];
  if (std::find(hasChild.begin(), hasChild.end(), 0) != hasChild.end())
    fail(ErrorCode::kInvalidArgument, "child scale leaves a parent without children");
  return occ;
}

namespace {

template <typename T>
typename Tape<T>::Id
trunkFeatures(Tape<T>& tape, const UelcModel& model, const ScalePlan& plan)
{
  Neighborhood nb(plan.parents);
  auto x = tape.input(Mat<T>(int(plan.parents.size()), 1, T(1)));
  x = fel(tape, x, model.trunk, nb);
  return uslLayer(tape, x, model.usl, plan.up);
}

// Logits of stage t's PPOV rows. The context holds the decoded occupied
// voxels of earlier stages (flag 1) and the current candidates (flag 0).
template <typename T>
typename Tape<T>::Id
stageLogits(Tape<T>& tape, const UelcModel& model, const ScalePlan& plan,
            typename Tape<T>::Id features, int t, std::span<const uint8_t> occupied)
{
  const auto& ppov = plan.ppov();
  std::vector<int32_t> ctxRows;
  std::vector<int32_t> current;
  CoordSet coords;
  Mat<T> flags(0, 1);
  for (size_t i = 0; i < ppov.size(); ++i) {
    const int st = plan.stage[i];
    if (st == t) {
      current.push_back(int32_t(ctxRows.size()));
    } else if (!(st < t && occupied[i])) {
      continue;
    }
    ctxRows.push_back(int32_t(i));
    coords.push_back(ppov[i]);
    flags.data.push_back(st < t ? T(1) : T(0));
  }
  flags.rows = int(ctxRows.size());

  const auto& net = model.stages[t - 1];
  Neighborhood nb(std::move(coords));
  auto x = tape.concat(tape.gather(features, std::move(ctxRows)), tape.input(std::move(flags)));
  x = fel(tape, x, net.fel1, nb);
  x = fel(tape, x, net.fel2, nb);
  x = opgLogits(tape, x, net.opg);
  return tape.gather(x, std::move(current));
}

}  // namespace

StageEvaluator::StageEvaluator(const ParamStore& store, const UelcModel& model,
                               const ScalePlan& plan)
  : _model(&model), _plan(&plan), _tape(store)
{
  _features = trunkFeatures(_tape, model, plan);
}

std::vector<float>
StageEvaluator::logits(int t, std::span<const uint8_t> occupied)
{
  if (_plan->rows[t].empty())
    return {};
  const auto z = stageLogits(_tape, *_model, *_plan, _features, t, occupied);
  return _tape.value(z).data;
}

std::vector<uint16_t>
StageEvaluator::probabilities(int t, std::span<const uint8_t> occupied)
{
  const auto z = logits(t, occupied);
  std::vector<uint16_t> p(z.size());
  for (size_t i = 0; i < z.size(); ++i)
    p[i] = quantizeProbability(occupancyProbability(double(z[i])));
  return p;
}

//============================================================================

namespace {

ScaleRate
runEncoder(const ParamStore& store, const UelcModel& model, const CoordSet& parents,
           const CoordSet& truth, RangeEncoder* enc)
{
  const auto plan = planScale(parents, model.config.scheme);
  const auto occ = occupancyOf(plan, truth);
  StageEvaluator eval(store, model, plan);
  ScaleRate rate;
  for (int t = 1; t <= kNumStages; ++t) {
    const auto& rows = plan.rows[t];
    const auto p = eval.probabilities(t, occ);
    auto& sr = rate.stages[t - 1];
    for (size_t k = 0; k < rows.size(); ++k) {
      const int bit = occ[rows[k]];
      if (enc)
        enc->encodeBit(bit, p[k]);
      sr.idealBits += bitCost(bit, p[k]);
    }
    sr.symbols += rows.size();
  }
  return rate;
}

}  // namespace

std::vector<uint8_t>
encodeScale(const ParamStore& store, const UelcModel& model, const CoordSet& parents,
            const CoordSet& truth, ScaleRate* rate)
{
  RangeEncoder enc;
  auto r = runEncoder(store, model, parents, truth, &enc);
  auto bytes = enc.finish();
  r.payloadBytes = bytes.size();
  if (rate)
    *rate = r;
  return bytes;
}

ScaleRate
estimateScale(const ParamStore& store, const UelcModel& model, const CoordSet& parents,
              const CoordSet& truth)
{
  return runEncoder(store, model, parents, truth, nullptr);
}

CoordSet
decodeScale(const ParamStore& store, const UelcModel& model, const CoordSet& parents,
            std::span<const uint8_t> payload)
{
  const auto plan = planScale(parents, model.config.scheme);
  std::vector<uint8_t> occ(plan.ppov().size(), 0);
  StageEvaluator eval(store, model, plan);
  RangeDecoder dec(payload);
  for (int t = 1; t <= kNumStages; ++t) {
    const auto& rows = plan.rows[t];
    const auto p = eval.probabilities(t, occ);
    for (size_t k = 0; k < rows.size(); ++k)
      occ[rows[k]] = uint8_t(dec.decodeBit(p[k]));
  }
  dec.finish();

  std::vector<uint8_t> hasChild(plan.parents.size(), 0);
  CoordSet out;
  for (size_t i = 0; i < occ.size(); ++i) {
    if (occ[i]) {
      out.push_back(plan.ppov()[i]);
      hasChild[plan.up->parent[i]] = 1;
    }
  }
  if (std::find(hasChild.begin(), hasChild.end(), 0) != hasChild.end())
    fail(ErrorCode::kCorruptStream, "decoded scale leaves a parent voxel without children");
  return out;
}

//============================================================================

int
chooseBaseScale(const ScalePyramid& pyr, int top)
{
  if (top < 0 || top >= int(pyr.levels.size()))
    fail(ErrorCode::kInvalidArgument, "chooseBaseScale: level out of range");
  for (int s = top; s > 0; --s)
    if (pyr.levels[s].size() <= kMaxBasePoints)
      return s;
  return 0;
}

CoordPayload
encodeCoords(const ParamStore& store, const UelcModel& model, const ScalePyramid& pyr, int top)
{
  CoordPayload out;
  out.baseScale = chooseBaseScale(pyr, top);
  out.base = pyr.levels[out.baseScale];
  for (int s = out.baseScale + 1; s <= top; ++s) {
    ScaleRate rate;
    out.chunks.push_back(encodeScale(store, model, pyr.levels[s - 1], pyr.levels[s], &rate));
    rate.scale = s;
    out.report.scales.push_back(rate);
  }
  return out;
}

std::vector<CoordSet>
decodeCoords(const ParamStore& store, const UelcModel& model, int baseScale, const CoordSet& base,
             std::span<const std::vector<uint8_t>> chunks)
{
  if (baseScale + int(chunks.size()) > kMaxDepth)
    fail(ErrorCode::kCorruptStream, "too many coordinate chunks");
  std::vector<CoordSet> levels{base};
  for (const auto& chunk : chunks)
    levels.push_back(decodeScale(store, model, levels.back(), chunk));
  return levels;
}

//============================================================================

template <typename T>
typename Tape<T>::Id
uelcTransitionLoss(Tape<T>& tape, const UelcModel& model, const ScalePlan& plan,
                   std::span<const uint8_t> occupied)
{
  const auto features = trunkFeatures(tape, model, plan);
  typename Tape<T>::Id total = -1;
  for (int t = 1; t <= kNumStages; ++t) {
    const auto& rows = plan.rows[t];
    if (rows.empty())
      continue;
    std::vector<uint8_t> targets(rows.size());
    for (size_t k = 0; k < rows.size(); ++k)
      targets[k] = occupied[rows[k]];
    const auto z = stageLogits(tape, model, plan, features, t, occupied);
    const auto loss = tape.bce(z, std::move(targets), T(1.0 / std::numbers::ln2));
    total = total < 0 ? loss : tape.add(total, loss);
  }
  return total < 0 ? tape.input(Mat<T>(1, 1)) : total;
}

template Tape<float>::Id uelcTransitionLoss(Tape<float>&, const UelcModel&, const ScalePlan&,
                                            std::span<const uint8_t>);
template Tape<double>::Id uelcTransitionLoss(Tape<double>&, const UelcModel&, const ScalePlan&,
                                             std::span<const uint8_t>);

namespace {

struct Transition {
  ScalePlan plan;
  std::vector<uint8_t> occupied;
};

std::vector<Transition>
finestTransitions(const VoxelCloud& cloud, const GroupingScheme& scheme, int count)
{
  const auto pyr = buildPyramid(cloud.coords, cloud.depth);
  std::vector<Transition> out;
  for (int s = std::max(1, cloud.depth - count + 1); s <= cloud.depth; ++s) {
    if (pyr.levels[s - 1].empty())
      continue;
    Transition tr;
    tr.plan = planScale(pyr.levels[s - 1], scheme);
    tr.occupied = occupancyOf(tr.plan, pyr.levels[s]);
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace

double
trainUelc(ParamStore& store, const UelcModel& model, std::span<const VoxelCloud> corpus,
          const UelcTrainConfig& cfg)
{
  if (corpus.empty())
    fail(ErrorCode::kInvalidArgument, "trainUelc: empty corpus");
  std::vector<std::vector<Transition>> samples;
  samples.reserve(corpus.size());
  for (const auto& c : corpus)
    samples.push_back(finestTransitions(c, model.config.scheme, cfg.transitions));

  const auto which = model.trainable(store);
  Adam adam(store);
  Rng rng(cfg.seed);
  const int batch = std::max(1, cfg.batch);
  const int64_t perEpoch = (int64_t(samples.size()) + batch - 1) / batch;
  const int64_t totalSteps = perEpoch * cfg.epochs;
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  double lastEpoch = 0.0;
  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const ParamStore snapshot = store;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);

    double epochBits = 0.0;
    uint64_t epochSymbols = 0;
    for (size_t start = 0; start < order.size(); start += batch) {
      Gradient grad(store);
      double batchBits = 0.0;
      uint64_t batchSymbols = 0;
      for (size_t k = start; k < std::min(order.size(), start + batch); ++k) {
        for (const auto& tr : samples[order[k]]) {
          Tape<float> tape(store);
          const auto loss = uelcTransitionLoss(tape, model, tr.plan, tr.occupied);
          batchBits += double(tape.scalar(loss));
          batchSymbols += tr.occupied.size();
          tape.backward(loss, grad);
        }
      }
      if (!std::isfinite(batchBits)) {
        store = snapshot;
        fail(ErrorCode::kNumeric, "UELC training diverged in epoch " + std::to_string(epoch));
      }
      if (batchSymbols == 0)
        continue;
      grad.scale(1.0 / double(batchSymbols));
      grad.checkFinite(store);
      adam.step(store, grad, cosineLr(cfg.lrStart, cfg.lrEnd, step, totalSteps), which);
      ++step;
      epochBits += batchBits;
      epochSymbols += batchSymbols;
    }
    lastEpoch = epochSymbols ? epochBits / double(epochSymbols) : 0.0;
    if (cfg.onEpoch)
      cfg.onEpoch(epoch, lastEpoch);
  }
  return lastEpoch;
}

double
evaluateUelc(const ParamStore& store, const UelcModel& model, std::span<const VoxelCloud> clouds,
             int transitions)
{
  double bits = 0.0;
  uint64_t symbols = 0;
  for (const auto& c : clouds) {
    const auto pyr = buildPyramid(c.coords, c.depth);
    for (int s = std::max(1, c.depth - transitions + 1); s <= c.depth; ++s) {
      if (pyr.levels[s - 1].empty())
        continue;
      const auto r = estimateScale(store, model, pyr.levels[s - 1], pyr.levels[s]);
      bits += r.idealBits();
      symbols += r.symbols();
    }
  }
  return symbols ? bits / double(symbols) : 0.0;
}

}  // namespace upcg
