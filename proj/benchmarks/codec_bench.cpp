#include "upcg/codec.hpp"
#include "upcg/layers.hpp"
#include "upcg/range_coder.hpp"
#include "upcg/synth.hpp"

#include <benchmark/benchmark.h>

namespace upcg {
namespace {

void
BM_KernelMap(benchmark::State& state)
{
  const auto cloud = synthCloud(SynthKind::kSphereShell, int(state.range(0)), 1);
  for (auto _ : state) {
    Neighborhood nb(cloud);
    benchmark::DoNotOptimize(nb.map(3));
  }
  state.counters["points"] = double(cloud.size());
}
BENCHMARK(BM_KernelMap)->Arg(7)->Arg(9)->Unit(benchmark::kMillisecond);

void
BM_SparseConv(benchmark::State& state)
{
  const auto cloud = synthCloud(SynthKind::kTorus, 8, 1);
  const int width = int(state.range(0));
  ParamStore store;
  Rng rng(1);
  const auto conv = addConv(store, "c", 27, width, width, rng);
  Neighborhood nb(cloud);
  const auto map = nb.map(3);
  Mat<float> x(int(cloud.size()), width, 0.5f);
  for (auto _ : state) {
    Tape<float> tape(store);
    benchmark::DoNotOptimize(tape.value(convLayer(tape, tape.input(x), conv, map)).data.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(cloud.size()));
}
BENCHMARK(BM_SparseConv)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

// Dynamic feature extraction at several keep ratios.
void
BM_Dfel(benchmark::State& state)
{
  const auto cloud = synthCloud(SynthKind::kSponge, 8, 1);
  const double rho = double(state.range(0)) / 100.0;
  ParamStore store;
  Rng rng(2);
  const auto p = addDfel(store, "d", 16, 16, 3, 1, rng);
  Neighborhood nb(cloud);
  Mat<float> x(int(cloud.size()), 16);
  for (auto& v : x.data)
    v = float(rng.uniform(-1, 1));
  uint64_t macs = 0;
  for (auto _ : state) {
    Tape<float> tape(store);
    benchmark::DoNotOptimize(tape.value(dfel(tape, tape.input(x), p, nb, rho)).data.data());
    macs = tape.macs();
  }
  state.counters["macs"] = double(macs);
}
BENCHMARK(BM_Dfel)->Arg(25)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void
BM_RangeCoderBits(benchmark::State& state)
{
  Rng rng(3);
  std::vector<uint16_t> p(1 << 16);
  std::vector<uint8_t> bits(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = quantizeProbability(rng.uniform());
    bits[i] = rng.uniform() * 65536.0 < p[i];
  }
  for (auto _ : state) {
    RangeEncoder enc;
    for (size_t i = 0; i < p.size(); ++i)
      enc.encodeBit(bits[i], p[i]);
    benchmark::DoNotOptimize(enc.finish());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(p.size()));
}
BENCHMARK(BM_RangeCoderBits);

CodecModel
benchModel()
{
  ParamStore store;
  Rng rng(4);
  UelcConfig u;
  u.trunkBlocks = 1;
  u.stageBlocks = 1;
  UelcModel::add(store, "uelc", u, rng);
  VrcmConfig v;
  v.blocks = 1;
  VrcmModel::add(store, "vrcm", v, rng);
  return CodecModel::fromStore(std::move(store));
}

void
BM_LosslessEncode(benchmark::State& state)
{
  static const auto model = benchModel();
  const int depth = int(state.range(0));
  const auto cloud = synthCloud(SynthKind::kPlanarPatches, depth, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(encodeLossless(model, cloud, depth));
  state.counters["points"] = double(cloud.size());
}
BENCHMARK(BM_LosslessEncode)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

void
BM_LosslessDecode(benchmark::State& state)
{
  static const auto model = benchModel();
  const int depth = int(state.range(0));
  const auto bytes = encodeLossless(model, synthCloud(SynthKind::kPlanarPatches, depth, 1), depth);
  for (auto _ : state)
    benchmark::DoNotOptimize(decodeStream(model, bytes));
}
BENCHMARK(BM_LosslessDecode)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

void
BM_LossyEncode(benchmark::State& state)
{
  static const auto model = benchModel();
  const auto cloud = synthCloud(SynthKind::kSphereShell, 8, 1);
  LossyParams p;
  p.n = 1;
  p.rho = double(state.range(0)) / 100.0;
  StreamStats st;
  for (auto _ : state)
    benchmark::DoNotOptimize(encodeLossy(model, cloud, 8, p, &st));
  state.counters["macs"] = double(st.macs);
}
BENCHMARK(BM_LossyEncode)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace upcg

BENCHMARK_MAIN();
