#include "upcg/layers.hpp"

#include "upcg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace upcg {

ConvParams
addConv(ParamStore& store, const std::string& name, int taps, int cin, int cout, Rng& rng)
{
  ConvParams p;
  p.w = store.add(name + ".w", {taps, cin, cout});
  p.b = store.add(name + ".b", {cout});
  initGlorot(store[p.w], taps * cin, taps * cout, rng);
  return p;
}

ConvParams
findConv(const ParamStore& store, const std::string& name)
{
  return {store.index(name + ".w"), store.index(name + ".b")};
}

namespace {

int
halfWidth(int width)
{
  if (width < 2 || width % 2 != 0)
    fail(ErrorCode::kInvalidArgument, "feature width must be even and >= 2");
  return width / 2;
}

int
countBlocks(const ParamStore& store, const std::string& prefix)
{
  int n = 0;
  while (store.contains(prefix + ".irn" + std::to_string(n) + ".b1.w")
         || store.contains(prefix + ".irn" + std::to_string(n) + ".b1.a.w"))
    ++n;
  return n;
}

int
kernelOfTaps(int taps)
{
  for (int k : {1, 3, 5})
    if (k * k * k == taps)
      return k;
  fail(ErrorCode::kModelMismatch, "unexpected kernel tap count " + std::to_string(taps));
}

DscParams
addDscPair(ParamStore& store, const std::string& name, int taps, int cin, int cout, Rng& rng)
{
  return {addConv(store, name + ".a", 1, cin, cout, rng),
          addConv(store, name + ".b", taps, cout, cout, rng)};
}

DscParams
findDscPair(const ParamStore& store, const std::string& name)
{
  return {findConv(store, name + ".a"), findConv(store, name + ".b")};
}

}  // namespace

FelParams
addFel(ParamStore& store, const std::string& prefix, int cin, int width, int kernel, int nBlocks,
       Rng& rng)
{
  const int half = halfWidth(width);
  const int taps = kernel * kernel * kernel;
  FelParams p;
  p.kernel = kernel;
  p.width = width;
  if (cin != width)
    p.proj = addConv(store, prefix + ".proj", 1, cin, width, rng);
  for (int i = 0; i < nBlocks; ++i) {
    const std::string b = prefix + ".irn" + std::to_string(i);
    IrnParams blk;
    blk.branch1 = addConv(store, b + ".b1", taps, width, half, rng);
    blk.branch2a = addConv(store, b + ".b2a", taps, width, half, rng);
    blk.branch2b = addConv(store, b + ".b2b", taps, half, half, rng);
    p.blocks.push_back(blk);
  }
  return p;
}

FelParams
findFel(const ParamStore& store, const std::string& prefix)
{
  FelParams p;
  const int n = countBlocks(store, prefix);
  if (n == 0 && !store.contains(prefix + ".proj.w"))
    fail(ErrorCode::kModelMismatch, "checkpoint lacks layer " + prefix);
  if (store.contains(prefix + ".proj.w"))
    p.proj = findConv(store, prefix + ".proj");
  for (int i = 0; i < n; ++i) {
    const std::string b = prefix + ".irn" + std::to_string(i);
    p.blocks.push_back({findConv(store, b + ".b1"), findConv(store, b + ".b2a"),
                        findConv(store, b + ".b2b")});
  }
  if (n > 0) {
    const auto& w = store[p.blocks[0].branch1.w];
    p.kernel = kernelOfTaps(w.dims[0]);
    p.width = w.dims[1];
  } else {
    p.kernel = 1;
    p.width = store[p.proj.w].dims[2];
  }
  return p;
}

DfelParams
addDfel(ParamStore& store, const std::string& prefix, int cin, int width, int kernel, int nBlocks,
        Rng& rng)
{
  const int half = halfWidth(width);
  const int taps = kernel * kernel * kernel;
  DfelParams p;
  p.kernel = kernel;
  p.width = width;
  if (cin != width)
    p.proj = addConv(store, prefix + ".proj", 1, cin, width, rng);
  for (int i = 0; i < nBlocks; ++i) {
    const std::string b = prefix + ".irn" + std::to_string(i);
    DirnParams blk;
    blk.branch1 = addDscPair(store, b + ".b1", taps, width, half, rng);
    blk.branch2a = addDscPair(store, b + ".b2a", taps, width, half, rng);
    blk.branch2b = addDscPair(store, b + ".b2b", taps, half, half, rng);
    p.blocks.push_back(blk);
  }
  return p;
}

DfelParams
findDfel(const ParamStore& store, const std::string& prefix)
{
  DfelParams p;
  const int n = countBlocks(store, prefix);
  if (n == 0)
    fail(ErrorCode::kModelMismatch, "checkpoint lacks layer " + prefix);
  if (store.contains(prefix + ".proj.w"))
    p.proj = findConv(store, prefix + ".proj");
  for (int i = 0; i < n; ++i) {
    const std::string b = prefix + ".irn" + std::to_string(i);
    p.blocks.push_back({findDscPair(store, b + ".b1"), findDscPair(store, b + ".b2a"),
                        findDscPair(store, b + ".b2b")});
  }
  const auto& wa = store[p.blocks[0].branch1.a.w];
  const auto& wb = store[p.blocks[0].branch1.b.w];
  p.kernel = kernelOfTaps(wb.dims[0]);
  p.width = wa.dims[1];
  return p;
}

//============================================================================

std::shared_ptr<const KernelMap>
Neighborhood::map(int kernel)
{
  if (kernel < 1 || kernel > 5 || kernel % 2 == 0)
    fail(ErrorCode::kInvalidArgument, "unsupported kernel size " + std::to_string(kernel));
  auto& slot = _maps[kernel];
  if (!slot)
    slot = std::make_shared<KernelMap>(kernelGather(_coords, kernel));
  return slot;
}

template <typename T>
NodeId<T>
convLayer(Tape<T>& tape, NodeId<T> x, const ConvParams& p, std::shared_ptr<const KernelMap> map)
{
  return tape.conv(x, tape.param(p.w), tape.param(p.b), std::move(map));
}

template <typename T>
NodeId<T>
denseLayer(Tape<T>& tape, NodeId<T> x, const ConvParams& p)
{
  return tape.dense(x, tape.param(p.w), tape.param(p.b));
}

template <typename T>
NodeId<T>
uslLayer(Tape<T>& tape, NodeId<T> x, const ConvParams& p, std::shared_ptr<const UpsampleMap> map)
{
  return tape.upsample(x, tape.param(p.w), tape.param(p.b), std::move(map));
}

template <typename T>
NodeId<T>
downLayer(Tape<T>& tape, NodeId<T> x, const ConvParams& p, std::shared_ptr<const DownsampleMap> map)
{
  return tape.downsample(x, tape.param(p.w), tape.param(p.b), std::move(map));
}

template <typename T>
NodeId<T>
irnBlock(Tape<T>& tape, NodeId<T> x, const IrnParams& p, std::shared_ptr<const KernelMap> map)
{
  const auto b1 = tape.relu(convLayer(tape, x, p.branch1, map));
  const auto b2 = tape.relu(convLayer(tape, x, p.branch2a, map));
  const auto b2b = tape.relu(convLayer(tape, b2, p.branch2b, map));
  return tape.add(x, tape.concat(b1, b2b));
}

template <typename T>
NodeId<T>
fel(Tape<T>& tape, NodeId<T> x, const FelParams& p, Neighborhood& nb)
{
  if (p.proj.valid())
    x = denseLayer(tape, x, p.proj);
  if (tape.value(x).cols != p.width)
    fail(ErrorCode::kInvalidArgument, "fel: channel mismatch");
  if (p.blocks.empty())
    return x;
  const auto map = nb.map(p.kernel);
  for (const auto& blk : p.blocks)
    x = irnBlock(tape, x, blk, map);
  return x;
}

int
dscKeepCount(int n, double rho)
{
  if (!(rho >= 0.0 && rho <= 1.0))
    fail(ErrorCode::kInvalidArgument, "rho must lie in [0, 1]");
  return std::min(n, int(std::ceil(rho * double(n) - 1e-9)));
}

template <typename T>
std::vector<double>
correlation(const Mat<T>& feats, const KernelMap& map)
{
  const int n = feats.rows;
  const int c = feats.cols;
  if (map.numRows() != n)
    fail(ErrorCode::kInvalidArgument, "correlation: map does not match features");
  // Standardized features in single precision: half the memory traffic of
  // the pair loop below, which dominates the cost.
  std::vector<float> z(size_t(n) * c);
  for (int i = 0; i < n; ++i) {
    const T* f = feats.row(i);
    double mean = 0.0;
    for (int k = 0; k < c; ++k)
      mean += double(f[k]);
    mean /= double(c);
    double var = 0.0;
    for (int k = 0; k < c; ++k)
      var += (double(f[k]) - mean) * (double(f[k]) - mean);
    const double sigma = std::max(std::sqrt(var / double(c)), 1e-6);
    for (int k = 0; k < c; ++k)
      z[size_t(i) * c + k] = float((double(f[k]) - mean) / sigma);
  }

  std::vector<double> corr(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    int count = 0;
    const float* zi = z.data() + size_t(i) * c;
    for (int32_t e = map.rowStart[i]; e < map.rowStart[i + 1]; ++e) {
      const int j = map.input[e];
      if (j == i)
        continue;
      const float* zj = z.data() + size_t(j) * c;
      float dot = 0.0f;
      for (int k = 0; k < c; ++k)
        dot += zi[k] * zj[k];
      acc += double(dot);
      ++count;
    }
    corr[i] = count ? acc / (double(count) * double(c)) : 0.0;
  }
  return corr;
}

std::vector<int32_t>
rankByCorrelation(const std::vector<double>& corr)
{
  std::vector<int32_t> order(corr.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int32_t a, int32_t b) { return corr[a] > corr[b]; });
  return order;
}

std::pair<std::vector<int32_t>, std::vector<int32_t>>
splitByCorrelation(const std::vector<double>& corr, int keep)
{
  const int n = int(corr.size());
  if (keep < 0 || keep > n)
    fail(ErrorCode::kInvalidArgument, "splitByCorrelation: keep out of range");
  std::vector<int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Total order (correlation descending, row ascending), so the selected
  // set is unique.
  auto before = [&](int32_t a, int32_t b) { return corr[a] != corr[b] ? corr[a] > corr[b] : a < b; };
  if (keep > 0 && keep < n)
    std::nth_element(order.begin(), order.begin() + keep, order.end(), before);
  std::vector<uint8_t> kept(n, 0);
  for (int i = 0; i < keep; ++i)
    kept[order[i]] = 1;
  std::pair<std::vector<int32_t>, std::vector<int32_t>> out;
  out.first.reserve(keep);
  out.second.reserve(n - keep);
  for (int32_t r = 0; r < n; ++r)
    (kept[r] ? out.first : out.second).push_back(r);
  return out;
}

template <typename T>
NodeId<T>
dsc(Tape<T>& tape, NodeId<T> x, const DscParams& p, std::shared_ptr<const KernelMap> map,
    double rho)
{
  const auto u = denseLayer(tape, x, p.a);
  const int n = tape.value(u).rows;
  const int keep = dscKeepCount(n, rho);
  if (keep == 0)
    return u;
  if (keep == n)
    return convLayer(tape, u, p.b, std::move(map));

  const auto corr = correlation(tape.value(u), *map);
  tape.addMacs(uint64_t(map->numPairs()) * uint64_t(tape.value(u).cols));
  auto [rows1, rows2] = splitByCorrelation(corr, keep);

  uint64_t h = 0x84222325cbf29ce4ull;
  for (int32_t r : rows1)
    h = (h ^ uint64_t(r)) * 0x100000001b3ull;
  tape.notePattern(h);

  auto sub = std::make_shared<const KernelMap>(restrictKernelMap(*map, rows1));
  const auto x1 = convLayer(tape, tape.gather(u, rows1), p.b, std::move(sub));
  const auto x2 = tape.gather(u, rows2);
  return tape.merge(x1, std::move(rows1), x2, std::move(rows2), n);
}

template <typename T>
NodeId<T>
dfel(Tape<T>& tape, NodeId<T> x, const DfelParams& p, Neighborhood& nb, double rho)
{
  if (p.proj.valid())
    x = denseLayer(tape, x, p.proj);
  if (tape.value(x).cols != p.width)
    fail(ErrorCode::kInvalidArgument, "dfel: channel mismatch");
  const auto map = nb.map(p.kernel);
  for (const auto& blk : p.blocks) {
    const auto b1 = tape.relu(dsc(tape, x, blk.branch1, map, rho));
    const auto b2 = tape.relu(dsc(tape, x, blk.branch2a, map, rho));
    const auto b2b = tape.relu(dsc(tape, b2, blk.branch2b, map, rho));
    x = tape.add(x, tape.concat(b1, b2b));
  }
  return x;
}

template <typename T>
NodeId<T>
opgLogits(Tape<T>& tape, NodeId<T> x, const ConvParams& p)
{
  return denseLayer(tape, x, p);
}

double
occupancyProbability(double logit)
{
  const double p = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit))
                              : std::exp(logit) / (1.0 + std::exp(logit));
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

#define UPCG_INSTANTIATE_LAYERS(T)                                                             \
  template NodeId<T> convLayer<T>(Tape<T>&, NodeId<T>, const ConvParams&,                     \
                                  std::shared_ptr<const KernelMap>);                          \
  template NodeId<T> denseLayer<T>(Tape<T>&, NodeId<T>, const ConvParams&);                   \
  template NodeId<T> uslLayer<T>(Tape<T>&, NodeId<T>, const ConvParams&,                      \
                                 std::shared_ptr<const UpsampleMap>);                         \
  template NodeId<T> downLayer<T>(Tape<T>&, NodeId<T>, const ConvParams&,                     \
                                  std::shared_ptr<const DownsampleMap>);                      \
  template NodeId<T> irnBlock<T>(Tape<T>&, NodeId<T>, const IrnParams&,                       \
                                 std::shared_ptr<const KernelMap>);                           \
  template NodeId<T> fel<T>(Tape<T>&, NodeId<T>, const FelParams&, Neighborhood&);            \
  template NodeId<T> dsc<T>(Tape<T>&, NodeId<T>, const DscParams&,                            \
                            std::shared_ptr<const KernelMap>, double);                        \
  template NodeId<T> dfel<T>(Tape<T>&, NodeId<T>, const DfelParams&, Neighborhood&, double);  \
  template NodeId<T> opgLogits<T>(Tape<T>&, NodeId<T>, const ConvParams&);                    \
  template std::vector<double> correlation<T>(const Mat<T>&, const KernelMap&);

UPCG_INSTANTIATE_LAYERS(float)
UPCG_INSTANTIATE_LAYERS(double)

}  // namespace upcg
