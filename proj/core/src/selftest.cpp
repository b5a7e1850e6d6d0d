#include "upcg/selftest.hpp"

#include "upcg/codec.hpp"
#include "upcg/errors.hpp"
#include "upcg/gradcheck.hpp"
#include "upcg/metrics.hpp"
#include "upcg/ply.hpp"
#include "upcg/synth.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace upcg {

namespace {

// Thrown by the checks below; carries the failure description.
struct CheckFailed {
  std::string what;
};

void
expect(bool ok, const std::string& what)
{
  if (!ok)
    throw CheckFailed{what};
}

CodecModel
randomModel(uint64_t seed)
{
  ParamStore store;
  Rng rng(seed);
  UelcConfig u;
  u.kernel = 3;
  u.width = 4;
  u.trunkBlocks = 1;
  u.stageBlocks = 1;
  const auto uelc = UelcModel::add(store, "uelc", u, rng);
  // Larger weights than the initializer gives, so the probabilities move
  // away from 1/2 and the coder sees skewed inputs.
  for (int t : uelc.trainable(store))
    for (auto& v : store[t].values)
      v = float(rng.uniform(-0.5, 0.5));
  VrcmConfig v;
  v.width = 4;
  v.latent = 2;
  v.blocks = 1;
  v.modHidden = 4;
  VrcmModel::add(store, "vrcm", v, rng);
  return CodecModel::fromStore(std::move(store));
}

std::string
rangeCoderFuzz(Rng& rng)
{
  for (int s = 0; s < 100; ++s) {
    const int n = int(rng.below(3000));
    std::vector<uint8_t> bits(n);
    std::vector<uint16_t> p(n);
    RangeEncoder enc;
    double ideal = 0.0;
    for (int i = 0; i < n; ++i) {
      p[i] = quantizeProbability(rng.uniform());
      bits[i] = rng.uniform() * 65536.0 < p[i] ? 1 : 0;
      ideal += bitCost(bits[i], p[i]);
      enc.encodeBit(bits[i], p[i]);
    }
    const auto bytes = enc.finish();
    expect(8.0 * double(bytes.size()) <= ideal * 1.001 + 32.0,
           "stream " + std::to_string(s) + " exceeds its cost bound");
    RangeDecoder dec(bytes);
    for (int i = 0; i < n; ++i)
      expect(dec.decodeBit(p[i]) == bits[i], "bit mismatch in stream " + std::to_string(s));
    dec.finish();
  }
  return "100 streams";
}

std::string
factorizedRoundTrip(Rng& rng)
{
  ParamStore store;
  const auto m = FactorizedModel::add(store, "f", 3, rng);
  m.updateBounds(store);
  auto v = sampleFactorized(m, store, 2000, rng);
  v.data[0] = 1 << 20;  // escapes on both sides
  v.data[1] = -(1 << 20);
  const auto bytes = symEncode(m, store, v);
  expect(symDecode(m, store, bytes, v.rows).data == v.data, "decoded latents differ");
  return std::to_string(bytes.size()) + " bytes";
}

std::string
losslessRoundTrip(const CodecModel& model)
{
  size_t streams = 0;
  for (auto kind : allSynthKinds())
    for (int depth : {4, 6}) {
      const auto cloud = synthCloud(kind, depth, uint64_t(depth) * 7 + 1);
      StreamStats st;
      const auto bytes = encodeLossless(model, cloud, depth, &st);
      expect(st.totalBytes == bytes.size(), "bpp accounting");
      expect(decodeStream(model, bytes).cloud == cloud,
             synthKindName(kind) + " depth " + std::to_string(depth) + " not reproduced");
      ++streams;
    }
  return std::to_string(streams) + " streams";
}

std::string
lossyStructure(const CodecModel& model)
{
  const auto cloud = synthCloud(SynthKind::kSphereShell, 6, 3);
  const auto pyr = buildPyramid(cloud, 6);
  for (int n = 0; n <= 2; ++n) {
    LossyParams p;
    p.n = n;
    p.lambda = 1.0;
    const auto dec = decodeStream(model, encodeLossy(model, cloud, 6, p));
    expect(dec.latentCoords == downsample(dec.ci), "latent coordinates, n = " + std::to_string(n));
    expect(dec.ci == pyr.levels[6 - n - 1], "C_i, n = " + std::to_string(n));
    for (size_t i = 0; i < dec.reconstructed.size(); ++i)
      expect(dec.reconstructed[i].size() == dec.header.count(6 - n + int(i)),
             "reconstructed count, n = " + std::to_string(n));
  }
  return "n = 0, 1, 2";
}

std::string
causality(const CodecModel& model, Rng& rng)
{
  const auto& uelc = *model.uelc;
  const auto truth = synthCloud(SynthKind::kTorus, 6, 5);
  const auto plan = planScale(downsample(truth), uelc.config.scheme);
  const auto occ = occupancyOf(plan, truth);
  int flips = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int s = 1 + int(rng.below(kNumStages));
    const int later = s + int(rng.below(kNumStages + 1 - s));
    if (plan.rows[s].empty() || plan.rows[later].empty())
      continue;
    auto flipped = occ;
    flipped[plan.rows[later][rng.below(plan.rows[later].size())]] ^= 1;
    StageEvaluator a(model.store, uelc, plan), b(model.store, uelc, plan);
    expect(a.logits(s, occ) == b.logits(s, flipped),
           "stage " + std::to_string(s) + " read stage " + std::to_string(later));
    ++flips;
  }
  return std::to_string(flips) + " flips";
}

std::string
uelcGradient(Rng& rng)
{
  ParamStore store;
  UelcConfig cfg;
  cfg.kernel = 3;
  cfg.width = 2;
  cfg.trunkBlocks = 1;
  cfg.stageBlocks = 0;
  const auto m = UelcModel::add(store, "uelc", cfg, rng);
  for (int t : m.trainable(store))
    for (auto& v : store[t].values)
      v = float(rng.uniform(-0.6, 0.6));
  const CoordSet truth = {{0, 0, 0}, {1, 1, 0}, {3, 2, 2}, {2, 3, 3}, {5, 4, 1}, {4, 5, 0}};
  const auto plan = planScale(downsample(truth), cfg.scheme);
  const auto occ = occupancyOf(plan, truth);
  const auto r = gradCheck(store, [&](Tape<double>& t) {
    return uelcTransitionLoss(t, m, plan, occ);
  }, m.trainable(store));
  expect(r.pass(), "failing tensors: " + r.failing());
  std::ostringstream os;
  os << "worst relative error " << r.worst();
  return os.str();
}

std::string
vrcmGradient(Rng& rng)
{
  ParamStore store;
  VrcmConfig cfg;
  cfg.width = 2;
  cfg.latent = 2;
  cfg.kernel = 1;
  cfg.blocks = 1;
  cfg.modHidden = 2;
  const auto m = VrcmModel::add(store, "vrcm", cfg, rng);
  VoxelCloud cloud{"g", 4, synthCloud(SynthKind::kBoxFaces, 4, 2)};
  const auto inst = makeLossyInstance(cloud, 1, 1);
  Mat<double> noise(latentRows(inst), cfg.latent);
  for (auto& v : noise.data)
    v = rng.uniform(-0.5, 0.5);
  const auto r = gradCheck(store, [&](Tape<double>& t) {
    return vrcmLoss(t, m, inst, 1.0, 0.5, noise).total;
  }, m.trainable(store));
  expect(r.pass(), "failing tensors: " + r.failing());
  std::ostringstream os;
  os << "worst relative error " << r.worst();
  return os.str();
}

std::string
metricIdentities()
{
  const std::vector<RateQuality> a = {{0.2, 31.0}, {0.45, 34.0}, {0.9, 37.0}, {1.6, 39.5}};
  auto b = a;
  for (auto& q : b)
    q.rate *= 0.9;
  expect(std::abs(bdRate(a, a)) < 1e-9, "bd_rate(A, A) != 0");
  expect(std::abs(bdRate(a, b) + 10.0) <= 0.5, "uniform 0.9 rate scale is not -10%");
  const CoordSet p = {{3, 3, 3}, {7, 1, 2}};
  const CoordSet q = {{4, 3, 3}, {8, 1, 2}};
  const double expectDb = 10.0 * std::log10(3.0 * 1023.0 * 1023.0);
  expect(std::abs(d1(p, q, 10).psnr - expectDb) < 1e-9, "one-voxel shift PSNR");
  return "ok";
}

std::string
plyRoundTrip(Rng& rng)
{
  std::vector<Point3> pts;
  for (int i = 0; i < 200; ++i)
    pts.push_back({rng.uniform(-9, 9), rng.normal(), double(rng.below(100))});
  for (auto f : {PlyFormat::kAscii, PlyFormat::kBinaryLE})
    expect(readPly(writePly(pts, f)) == pts, "PLY round-trip");
  return "ascii, binary";
}

std::string
streamValidation(const CodecModel& model)
{
  auto bytes = encodeLossless(model, synthCloud(SynthKind::kSponge, 6, 1), 6);
  auto bad = bytes;
  bad[1] ^= 0x20;
  try {
    decodeStream(model, bad);
    expect(false, "flipped magic accepted");
  } catch (const Error& e) {
    expect(e.code() == ErrorCode::kBadMagic, "flipped magic gave the wrong error");
  }
  bytes.pop_back();
  try {
    decodeStream(model, bytes);
    expect(false, "truncated stream accepted");
  } catch (const Error& e) {
    expect(e.code() == ErrorCode::kLengthMismatch, "truncation gave the wrong error");
  }
  return "ok";
}

}  // namespace

std::vector<SelfTestResult>
runSelfTests(uint64_t seed, const std::function<void(const SelfTestResult&)>& onResult)
{
  Rng rng(seed);
  const auto model = randomModel(seed + 1);
  const std::vector<std::pair<std::string, std::function<std::string()>>> checks = {
    {"range-coder-fuzz", [&] { return rangeCoderFuzz(rng); }},
    {"factorized-roundtrip", [&] { return factorizedRoundTrip(rng); }},
    {"stream-validation", [&] { return streamValidation(model); }},
    {"lossless-roundtrip", [&] { return losslessRoundTrip(model); }},
    {"lossy-structure", [&] { return lossyStructure(model); }},
    {"decode-causality", [&] { return causality(model, rng); }},
    {"gradcheck-uelc", [&] { return uelcGradient(rng); }},
    {"gradcheck-vrcm", [&] { return vrcmGradient(rng); }},
    {"metric-identities", [&] { return metricIdentities(); }},
    {"ply-roundtrip", [&] { return plyRoundTrip(rng); }},
  };

  std::vector<SelfTestResult> out;
  for (const auto& [name, fn] : checks) {
    SelfTestResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.detail = fn();
      r.passed = true;
    } catch (const CheckFailed& e) {
      r.detail = e.what;
    } catch (const std::exception& e) {
      r.detail = std::string("unexpected error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (onResult)
      onResult(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace upcg
