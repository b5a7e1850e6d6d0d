#include "upcg/vrcm.hpp"

#include "upcg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace upcg {

double
RhoMap::operator()(double lambda) const
{
  if (anchors.empty())
    return 1.0;
  if (lambda <= anchors.front().first)
    return anchors.front().second;
  if (lambda >= anchors.back().first)
    return anchors.back().second;
  for (size_t i = 1; i < anchors.size(); ++i) {
    const auto [x0, y0] = anchors[i - 1];
    const auto [x1, y1] = anchors[i];
    if (lambda <= x1)
      return y0 + (y1 - y0) * (lambda - x0) / (x1 - x0);
  }
  return anchors.back().second;
}

namespace {

DolcParams
addDolc(ParamStore& store, const std::string& prefix, const VrcmConfig& cfg, Rng& rng)
{
  DolcParams p;
  p.usl = addConv(store, prefix + ".usl", 8, cfg.width, cfg.width, rng);
  p.dfel = addDfel(store, prefix + ".dfel", cfg.width, cfg.width, cfg.kernel, cfg.blocks, rng);
  p.opg = addConv(store, prefix + ".opg", 1, cfg.width, 1, rng);
  return p;
}

DolcParams
findDolc(const ParamStore& store, const std::string& prefix)
{
  return {findConv(store, prefix + ".usl"), findDfel(store, prefix + ".dfel"),
          findConv(store, prefix + ".opg")};
}

}  // namespace

VrcmModel
VrcmModel::add(ParamStore& store, const std::string& prefix, const VrcmConfig& cfg, Rng& rng)
{
  VrcmModel m;
  m.prefix = prefix;
  m.config = cfg;
  const int w = cfg.width;
  m.encFel1 = addFel(store, prefix + ".enc.fel1", 1, w, cfg.kernel, cfg.blocks, rng);
  m.encDown1 = addConv(store, prefix + ".enc.down1", 8, w, w, rng);
  m.encDfel = addDfel(store, prefix + ".enc.dfel", w, w, cfg.kernel, cfg.blocks, rng);
  m.encDown2 = addConv(store, prefix + ".enc.down2", 8, w, w, rng);
  m.encFel2 = addFel(store, prefix + ".enc.fel2", w, w, cfg.kernel, cfg.blocks, rng);
  m.encOut = addConv(store, prefix + ".enc.out", 1, w, cfg.latent, rng);
  m.mod1 = addConv(store, prefix + ".mod.l1", 1, 1, cfg.modHidden, rng);
  m.mod2 = addConv(store, prefix + ".mod.l2", 1, cfg.modHidden, cfg.latent, rng);
  m.decUsl = addConv(store, prefix + ".dec.usl", 8, cfg.latent, w, rng);
  m.decDfel = addDfel(store, prefix + ".dec.dfel", w, w, cfg.kernel, cfg.blocks, rng);
  m.dolc = addDolc(store, prefix + ".dolc", cfg, rng);
  m.up = addDolc(store, prefix + ".up", cfg, rng);
  m.entropy = FactorizedModel::add(store, prefix + ".entropy", cfg.latent, rng);

  m.settingsTensor = store.add(prefix + ".settings", {int(2 + 2 * cfg.rho.anchors.size())});
  auto& s = store[m.settingsTensor].values;
  s[0] = float(cfg.lambdaMin);
  s[1] = float(cfg.lambdaMax);
  for (size_t i = 0; i < cfg.rho.anchors.size(); ++i) {
    s[2 + 2 * i] = float(cfg.rho.anchors[i].first);
    s[3 + 2 * i] = float(cfg.rho.anchors[i].second);
  }
  return m;
}

VrcmModel
VrcmModel::find(const ParamStore& store, const std::string& prefix)
{
  VrcmModel m;
  m.prefix = prefix;
  m.encFel1 = findFel(store, prefix + ".enc.fel1");
  m.encDown1 = findConv(store, prefix + ".enc.down1");
  m.encDfel = findDfel(store, prefix + ".enc.dfel");
  m.encDown2 = findConv(store, prefix + ".enc.down2");
  m.encFel2 = findFel(store, prefix + ".enc.fel2");
  m.encOut = findConv(store, prefix + ".enc.out");
  m.mod1 = findConv(store, prefix + ".mod.l1");
  m.mod2 = findConv(store, prefix + ".mod.l2");
  m.decUsl = findConv(store, prefix + ".dec.usl");
  m.decDfel = findDfel(store, prefix + ".dec.dfel");
  m.dolc = findDolc(store, prefix + ".dolc");
  m.up = findDolc(store, prefix + ".up");
  m.entropy = FactorizedModel::find(store, prefix + ".entropy");
  m.settingsTensor = store.index(prefix + ".settings");

  auto& cfg = m.config;
  cfg.width = m.encFel1.width;
  cfg.kernel = m.encFel1.kernel;
  cfg.blocks = int(m.encFel1.blocks.size());
  cfg.latent = store[m.encOut.w].dims.at(2);
  cfg.modHidden = store[m.mod1.w].dims.at(2);
  const auto& s = store[m.settingsTensor].values;
  if (s.size() < 2 || s.size() % 2 != 0)
    fail(ErrorCode::kModelMismatch, "malformed lossy model settings");
  cfg.lambdaMin = s[0];
  cfg.lambdaMax = s[1];
  cfg.rho.anchors.clear();
  for (size_t i = 2; i < s.size(); i += 2)
    cfg.rho.anchors.emplace_back(s[i], s[i + 1]);
  if (m.entropy.channels() != cfg.latent)
    fail(ErrorCode::kModelMismatch, "entropy model width differs from the latent width");
  return m;
}

std::vector<int>
VrcmModel::trainable(const ParamStore& store) const
{
  auto all = store.withPrefix(prefix + ".");
  std::erase(all, settingsTensor);
  std::erase(all, store.index(prefix + ".entropy.bounds"));
  return all;
}

void
checkLambda(const VrcmModel& model, double lambda, bool unsafe)
{
  if (!std::isfinite(lambda))
    fail(ErrorCode::kInvalidArgument, "lambda must be finite");
  const double lo = model.config.lambdaMin;
  const double hi = model.config.lambdaMax;
  if (!unsafe && (lambda < lo - 1e-6 || lambda > hi + 1e-6))
    fail(ErrorCode::kInvalidArgument, "lambda " + std::to_string(lambda)
         + " lies outside the trained range [" + std::to_string(lo) + ", " + std::to_string(hi)
         + "]; pass --unsafe-lambda to extrapolate");
}

//============================================================================

template <typename T>
VId<T>
analysisTransform(Tape<T>& tape, const VrcmModel& m, const CoordSet& input, double rho)
{
  auto d1 = std::make_shared<const DownsampleMap>(buildDownsampleMap(input));
  auto d2 = std::make_shared<const DownsampleMap>(buildDownsampleMap(d1->parents));
  Neighborhood n0(input);
  Neighborhood n1(d1->parents);
  Neighborhood n2(d2->parents);
  auto x = tape.input(Mat<T>(int(input.size()), 1, T(1)));
  x = fel(tape, x, m.encFel1, n0);
  x = downLayer(tape, x, m.encDown1, d1);
  x = dfel(tape, x, m.encDfel, n1, rho);
  x = downLayer(tape, x, m.encDown2, d2);
  x = fel(tape, x, m.encFel2, n2);
  return denseLayer(tape, x, m.encOut);
}

template <typename T>
VId<T>
modulation(Tape<T>& tape, const VrcmModel& m, double lambda)
{
  auto x = tape.input(Mat<T>(1, 1, T(lambda)));
  x = tape.relu(denseLayer(tape, x, m.mod1));
  return tape.exp(denseLayer(tape, x, m.mod2));
}

template <typename T>
VId<T>
synthesisFeatures(Tape<T>& tape, const VrcmModel& m, VId<T> yDemod, const CoordSet& latent,
                  const CoordSet& ci, double rho)
{
  auto up = std::make_shared<const UpsampleMap>(buildUpsampleMap(latent));
  auto rows = lookupRows(up->children, ci);
  if (std::find(rows.begin(), rows.end(), -1) != rows.end())
    fail(ErrorCode::kCorruptStream, "C_i holds a voxel outside the latent's children");
  auto x = uslLayer(tape, yDemod, m.decUsl, std::move(up));
  x = tape.gather(x, std::move(rows));
  Neighborhood nb(ci);
  return dfel(tape, x, m.decDfel, nb, rho);
}

template <typename T>
DolcOutput<T>
dolcForward(Tape<T>& tape, const DolcParams& p, VId<T> feats, const CoordSet& coords, double rho)
{
  DolcOutput<T> out;
  out.up = std::make_shared<const UpsampleMap>(buildUpsampleMap(coords));
  auto x = uslLayer(tape, feats, p.usl, out.up);
  Neighborhood nb(out.up->children);
  out.features = dfel(tape, x, p.dfel, nb, rho);
  out.logits = opgLogits(tape, out.features, p.opg);
  return out;
}

LossyInstance
makeLossyInstance(const VoxelCloud& cloud, int n, int upSteps)
{
  LossyInstance inst;
  inst.pyr = buildPyramid(cloud.coords, cloud.depth);
  inst.inputScale = cloud.depth - n;
  if (n < 0 || inst.inputScale < 2)
    fail(ErrorCode::kInvalidArgument, "downsample count " + std::to_string(n)
         + " too large for depth " + std::to_string(cloud.depth));
  if (upSteps < 0 || upSteps > n)
    fail(ErrorCode::kInvalidArgument, "upsampling steps exceed the available levels");
  inst.upSteps = upSteps;
  return inst;
}

int
latentRows(const LossyInstance& inst)
{
  return int(inst.pyr.levels[inst.inputScale - 2].size());
}

template <typename T>
LossyLoss<T>
vrcmLoss(Tape<T>& tape, const VrcmModel& m, const LossyInstance& inst, double lambda, double rho,
         const Mat<T>& noise)
{
  const int s = inst.inputScale;
  const auto& levels = inst.pyr.levels;
  const auto& latent = levels[s - 2];
  if (noise.rows != int(latent.size()) || noise.cols != m.config.latent)
    fail(ErrorCode::kInvalidArgument, "vrcmLoss: noise has the wrong shape");

  const auto y = analysisTransform(tape, m, levels[s], rho);
  const auto r = modulation(tape, m, lambda);
  const auto yq = tape.add(tape.mul(y, r), tape.input(noise));
  const auto bits = tape.factorizedBits(yq, m.entropy.leaves(tape), T(kTailMass));
  auto feats = synthesisFeatures(tape, m, tape.div(yq, r), latent, levels[s - 1], rho);

  LossyLoss<T> out;
  VId<T> bce = -1;
  const CoordSet* coords = &levels[s - 1];
  for (int step = 0; step <= inst.upSteps; ++step) {
    const auto& head = step == 0 ? m.dolc : m.up;
    const auto& truth = levels[s + step];
    auto o = dolcForward(tape, head, feats, *coords, rho);
    auto rows = lookupRows(o.up->children, truth);
    std::vector<uint8_t> targets(o.up->children.size(), 0);
    for (int32_t row : rows)
      targets[row] = 1;
    const auto term = tape.bce(o.logits, std::move(targets), T(1));
    bce = bce < 0 ? term : tape.add(bce, term);
    if (step < inst.upSteps)
      feats = tape.gather(o.features, std::move(rows));
    coords = &truth;
  }

  out.points = int(levels[s + inst.upSteps].size());
  out.bce = double(tape.scalar(bce));
  out.bits = double(tape.scalar(bits));
  const auto total = tape.add(tape.scale(bce, T(lambda)), bits);
  out.total = tape.scale(total, T(1.0 / double(std::max(1, out.points))));
  return out;
}

#define UPCG_INSTANTIATE_VRCM(T)                                                               \
  template VId<T> analysisTransform(Tape<T>&, const VrcmModel&, const CoordSet&, double);      \
  template VId<T> modulation(Tape<T>&, const VrcmModel&, double);                              \
  template VId<T> synthesisFeatures(Tape<T>&, const VrcmModel&, VId<T>, const CoordSet&,       \
                                    const CoordSet&, double);                                  \
  template DolcOutput<T> dolcForward(Tape<T>&, const DolcParams&, VId<T>, const CoordSet&,     \
                                     double);                                                  \
  template LossyLoss<T> vrcmLoss(Tape<T>&, const VrcmModel&, const LossyInstance&, double,     \
                                 double, const Mat<T>&);

UPCG_INSTANTIATE_VRCM(float)
UPCG_INSTANTIATE_VRCM(double)

//============================================================================

CoordSet
reconstructTopK(std::span<const double> scores, const CoordSet& candidates, size_t k)
{
  if (scores.size() != candidates.size())
    fail(ErrorCode::kInvalidArgument, "reconstructTopK: score count mismatch");
  if (k > candidates.size())
    fail(ErrorCode::kInvalidArgument, "reconstructTopK: k = " + std::to_string(k)
         + " exceeds " + std::to_string(candidates.size()) + " candidates");
  std::vector<int32_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int32_t a, int32_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  CoordSet out;
  out.reserve(k);
  for (int32_t i : order)
    out.push_back(candidates[i]);
  return out;
}

std::vector<float>
modulationVector(const ParamStore& store, const VrcmModel& m, double lambda)
{
  Tape<float> tape(store);
  return tape.value(modulation(tape, m, lambda)).data;
}

LatentCode
encodeLatent(const ParamStore& store, const VrcmModel& m, const CoordSet& input, double lambda,
             double rho, uint64_t* macs)
{
  Tape<float> tape(store);
  const auto y = analysisTransform(tape, m, input, rho);
  const auto ym = tape.mul(y, modulation(tape, m, lambda));
  const auto& v = tape.value(ym);
  LatentCode out;
  out.coords = downsample(downsample(input));
  out.values = Mat<int32_t>(v.rows, v.cols);
  for (size_t i = 0; i < v.data.size(); ++i) {
    if (!std::isfinite(v.data[i]) || std::abs(v.data[i]) > 1e9f)
      fail(ErrorCode::kNumeric, "latent value out of range");
    out.values.data[i] = int32_t(std::lround(v.data[i]));
  }
  if (macs)
    *macs += tape.macs();
  return out;
}

std::vector<CoordSet>
reconstructLossy(const ParamStore& store, const VrcmModel& m, const LatentCode& latent,
                 const CoordSet& ci, std::span<const uint32_t> counts, double lambda, double rho,
                 uint64_t* macs)
{
  if (latent.values.rows != int(latent.coords.size()) || latent.values.cols != m.config.latent)
    fail(ErrorCode::kCorruptStream, "latent shape does not match its coordinates");
  Tape<float> tape(store);
  const auto r = modulation(tape, m, lambda);
  const auto yd = tape.div(tape.input(latent.values.cast<float>()), r);
  auto feats = synthesisFeatures(tape, m, yd, latent.coords, ci, rho);

  std::vector<CoordSet> levels;
  CoordSet coords = ci;
  for (size_t step = 0; step < counts.size(); ++step) {
    const auto& head = step == 0 ? m.dolc : m.up;
    auto o = dolcForward(tape, head, feats, coords, rho);
    const auto& z = tape.value(o.logits).data;
    if (counts[step] == 0 || counts[step] > o.up->children.size())
      fail(ErrorCode::kCorruptStream, "point count " + std::to_string(counts[step])
           + " is impossible for " + std::to_string(o.up->children.size()) + " candidates");
    const std::vector<double> scores(z.begin(), z.end());
    auto kept = reconstructTopK(scores, o.up->children, counts[step]);
    if (step + 1 < counts.size())
      feats = tape.gather(o.features, lookupRows(o.up->children, kept));
    coords = kept;
    levels.push_back(std::move(kept));
  }
  if (macs)
    *macs += tape.macs();
  return levels;
}

//============================================================================

double
vrcmStep(ParamStore& store, const VrcmModel& m, Adam& adam, std::span<const LossyInstance> batch,
         std::span<const double> lambdas, double lr, Rng& rng)
{
  Gradient grad(store);
  double total = 0.0;
  for (const auto& inst : batch) {
    for (double lambda : lambdas) {
      Mat<float> noise(latentRows(inst), m.config.latent);
      for (auto& v : noise.data)
        v = float(rng.uniform(-0.5, 0.5));
      Tape<float> tape(store);
      const auto loss = vrcmLoss(tape, m, inst, lambda, m.config.rho(lambda), noise);
      total += double(tape.scalar(loss.total));
      tape.backward(loss.total, grad);
    }
  }
  if (!std::isfinite(total))
    fail(ErrorCode::kNumeric, "lossy training loss is not finite");
  grad.scale(1.0 / double(std::max<size_t>(1, batch.size())));
  grad.checkFinite(store);
  adam.step(store, grad, lr, m.trainable(store));
  return total;
}

double
trainVrcm(ParamStore& store, const VrcmModel& m, std::span<const VoxelCloud> corpus,
          const VrcmTrainConfig& cfg)
{
  std::vector<LossyInstance> instances;
  for (const auto& c : corpus)
    if (c.depth - cfg.inputDownsample >= 3)
      instances.push_back(makeLossyInstance(c, cfg.inputDownsample, cfg.upSteps));
  if (instances.empty())
    fail(ErrorCode::kInvalidArgument, "trainVrcm: no usable clouds");

  struct Stage {
    int epochs;
    std::vector<double> lambdas;
  };
  const Stage stages[3] = {{cfg.stage1Epochs, {cfg.lambda1}},
                           {cfg.stage2Epochs, {cfg.lambda2}},
                           {cfg.stage3Epochs, cfg.anchors}};

  Adam adam(store);
  Rng rng(cfg.seed);
  const size_t batch = size_t(std::max(1, cfg.batch));
  std::vector<size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  double last = 0.0;
  for (int si = 0; si < 3; ++si) {
    const auto& st = stages[si];
    const int64_t perEpoch = int64_t((instances.size() + batch - 1) / batch);
    const int64_t total = perEpoch * st.epochs;
    int64_t step = 0;
    for (int epoch = 0; epoch < st.epochs; ++epoch) {
      const ParamStore snapshot = store;
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);
      double sum = 0.0;
      try {
        for (size_t start = 0; start < order.size(); start += batch) {
          std::vector<LossyInstance> b;
          for (size_t k = start; k < std::min(order.size(), start + batch); ++k)
            b.push_back(instances[order[k]]);
          sum += vrcmStep(store, m, adam, b, st.lambdas,
                          cosineLr(cfg.lrStart, cfg.lrEnd, step++, total), rng);
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumeric)
          throw;
        store = snapshot;
        fail(ErrorCode::kNumeric, std::string("lossy training diverged: ") + e.what());
      }
      last = sum / double(instances.size() * st.lambdas.size());
      if (cfg.onEpoch)
        cfg.onEpoch(si + 1, epoch, last);
    }
  }
  m.entropy.updateBounds(store);
  return last;
}

}  // namespace upcg
