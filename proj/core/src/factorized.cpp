#include "upcg/factorized.hpp"

#include "upcg/byteio.hpp"
#include "upcg/errors.hpp"
#include "upcg/factorized_net.hpp"
#include "upcg/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace upcg {

namespace {

constexpr const char* kTensorNames[11] = {"H0", "H1", "H2", "H3", "b0", "b1",
                                          "b2", "b3", "a0", "a1", "a2"};
constexpr int32_t kMaxSymbols = 16384;
constexpr int64_t kBoundSearchLimit = int64_t(1) << 24;

// One channel's parameters widened to double.
struct ChannelParams {
  std::array<std::array<double, 9>, 4> h{};
  std::array<std::array<double, 3>, 4> b{};
  std::array<std::array<double, 3>, 3> a{};

  cdfnet::View<double> view() const
  {
    cdfnet::View<double> v;
    for (int k = 0; k < 4; ++k) {
      v.h[k] = h[k].data();
      v.b[k] = b[k].data();
    }
    for (int k = 0; k < 3; ++k)
      v.a[k] = a[k].data();
    return v;
  }
};

ChannelParams
channelParams(const ParamStore& store, const std::array<int, 11>& t, int c)
{
  using namespace cdfnet;
  ChannelParams p;
  for (int k = 0; k < kLayers; ++k) {
    const auto& hv = store[t[k]].values;
    for (int i = 0; i < matrixSize(k); ++i)
      p.h[k][i] = hv[size_t(c) * matrixSize(k) + i];
    const auto& bv = store[t[4 + k]].values;
    for (int i = 0; i < vectorSize(k); ++i)
      p.b[k][i] = bv[size_t(c) * vectorSize(k) + i];
  }
  for (int k = 0; k < kLayers - 1; ++k) {
    const auto& av = store[t[8 + k]].values;
    for (int i = 0; i < vectorSize(k); ++i)
      p.a[k][i] = av[size_t(c) * vectorSize(k) + i];
  }
  return p;
}

double
binMass(double upper, double lower)
{
  using cdfnet::sigmoid;
  if (upper + lower > 0.0)
    return sigmoid(-lower) - sigmoid(-upper);
  return sigmoid(upper) - sigmoid(lower);
}

void
encodeRaw32(RangeEncoder& enc, int32_t v)
{
  const uint32_t u = uint32_t(v);
  enc.encode(u >> 16, 1);
  enc.encode(u & 0xFFFF, 1);
}

int32_t
decodeRaw32(RangeDecoder& dec)
{
  const uint32_t hi = dec.target();
  dec.consume(hi, 1);
  const uint32_t lo = dec.target();
  dec.consume(lo, 1);
  return int32_t((hi << 16) | lo);
}

}  // namespace

FactorizedModel
FactorizedModel::add(ParamStore& store, const std::string& prefix, int channels, Rng& rng)
{
  using namespace cdfnet;
  FactorizedModel m;
  m._channels = channels;
  const double initScale = 10.0;
  const double scale = std::pow(initScale, 1.0 / double(kLayers));
  for (int k = 0; k < kLayers; ++k) {
    const int out = kWidths[k + 1];
    const int in = kWidths[k];
    m._tensors[k] = store.add(prefix + "." + kTensorNames[k], {channels, out, in});
    const float init = float(std::log(std::expm1(1.0 / scale / double(out))));
    for (auto& v : store[m._tensors[k]].values)
      v = init;
  }
  for (int k = 0; k < kLayers; ++k) {
    m._tensors[4 + k] = store.add(prefix + "." + kTensorNames[4 + k], {channels, kWidths[k + 1]});
    for (auto& v : store[m._tensors[4 + k]].values)
      v = float(rng.uniform(-0.5, 0.5));
  }
  for (int k = 0; k < kLayers - 1; ++k)
    m._tensors[8 + k] = store.add(prefix + "." + kTensorNames[8 + k], {channels, kWidths[k + 1]});
  m._bounds = store.add(prefix + ".bounds", {channels, 2});
  m.updateBounds(store);
  return m;
}

FactorizedModel
FactorizedModel::find(const ParamStore& store, const std::string& prefix)
{
  FactorizedModel m;
  for (int k = 0; k < 11; ++k)
    m._tensors[k] = store.index(prefix + "." + kTensorNames[k]);
  m._bounds = store.index(prefix + ".bounds");
  m._channels = store[m._tensors[0]].dims.at(0);
  for (int k = 0; k < 11; ++k)
    if (store[m._tensors[k]].dims.at(0) != m._channels)
      fail(ErrorCode::kModelMismatch, "entropy model tensors disagree on channel count");
  return m;
}

double
FactorizedModel::cdf(const ParamStore& store, int channel, double x) const
{
  const auto p = channelParams(store, _tensors, channel);
  return cdfnet::sigmoid(cdfnet::logit(p.view(), x));
}

double
FactorizedModel::pmf(const ParamStore& store, int channel, int64_t v) const
{
  const auto p = channelParams(store, _tensors, channel);
  const auto view = p.view();
  return binMass(cdfnet::logit(view, double(v) + 0.5), cdfnet::logit(view, double(v) - 0.5));
}

double
FactorizedModel::bits(const ParamStore& store, const Mat<int32_t>& values) const
{
  if (values.cols != _channels && values.rows > 0)
    fail(ErrorCode::kInvalidArgument, "factorized bits: channel mismatch");
  double total = 0.0;
  for (int c = 0; c < values.cols; ++c) {
    const auto p = channelParams(store, _tensors, c);
    const auto view = p.view();
    for (int i = 0; i < values.rows; ++i) {
      const double v = values(i, c);
      const double m = binMass(cdfnet::logit(view, v + 0.5), cdfnet::logit(view, v - 0.5));
      total -= std::log2(std::max(m, kTailMass));
    }
  }
  return total;
}

void
FactorizedModel::updateBounds(ParamStore& store) const
{
  const double half = 0.5 * kTailMass;
  auto& out = store[_bounds].values;
  for (int c = 0; c < _channels; ++c) {
    const auto p = channelParams(store, _tensors, c);
    const auto view = p.view();
    // Median by bisection on the logit.
    double lo = -double(kBoundSearchLimit), hi = double(kBoundSearchLimit);
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdfnet::logit(view, mid) < 0.0 ? lo : hi) = mid;
    }
    const int64_t median = int64_t(std::llround(0.5 * (lo + hi)));
    int64_t yMin = median;
    while (cdfnet::sigmoid(cdfnet::logit(view, double(yMin) - 0.5)) >= half) {
      if (median - yMin > kBoundSearchLimit)
        fail(ErrorCode::kNumeric, "entropy model has no finite lower support bound");
      --yMin;
    }
    int64_t yMax = median;
    while (cdfnet::sigmoid(-cdfnet::logit(view, double(yMax) + 0.5)) >= half) {
      if (yMax - median > kBoundSearchLimit)
        fail(ErrorCode::kNumeric, "entropy model has no finite upper support bound");
      ++yMax;
    }
    out[2 * c] = float(yMin);
    out[2 * c + 1] = float(yMax);
  }
}

std::pair<int32_t, int32_t>
FactorizedModel::bounds(const ParamStore& store, int channel) const
{
  const auto& b = store[_bounds].values;
  return {int32_t(b[2 * channel]), int32_t(b[2 * channel + 1])};
}

//============================================================================

double
CodingTable::cost(int32_t v) const
{
  const double scale = double(kProbOne);
  if (v < yMin)
    return -std::log2(double(freq(0)) / scale) + 32.0;
  if (v > yMax)
    return -std::log2(double(freq(numSymbols() - 1)) / scale) + 32.0;
  return -std::log2(double(freq(v - yMin + 1)) / scale);
}

CodingTable
buildCodingTable(const FactorizedModel& model, const ParamStore& store, int channel, int32_t yMin,
                 int32_t yMax)
{
  if (yMax < yMin || int64_t(yMax) - int64_t(yMin) + 3 > kMaxSymbols)
    fail(ErrorCode::kCorruptStream, "invalid support bounds [" + std::to_string(yMin) + ", "
         + std::to_string(yMax) + "]");
  CodingTable t;
  t.yMin = yMin;
  t.yMax = yMax;
  const int nb = int(yMax - yMin) + 3;

  const auto p = channelParams(store, model.tensors(), channel);
  const auto view = p.view();
  std::vector<double> mass(nb);
  mass[0] = cdfnet::sigmoid(cdfnet::logit(view, double(yMin) - 0.5));
  for (int i = 1; i + 1 < nb; ++i) {
    const double v = double(yMin + i - 1);
    mass[i] = binMass(cdfnet::logit(view, v + 0.5), cdfnet::logit(view, v - 0.5));
  }
  mass[nb - 1] = cdfnet::sigmoid(-cdfnet::logit(view, double(yMax) + 0.5));

  const double spread = double(kProbOne - uint32_t(nb));
  std::vector<int64_t> freq(nb);
  int64_t total = 0;
  for (int i = 0; i < nb; ++i) {
    freq[i] = 1 + int64_t(std::floor(std::clamp(mass[i], 0.0, 1.0) * spread));
    total += freq[i];
  }
  const int largest = int(std::max_element(freq.begin(), freq.end()) - freq.begin());
  freq[largest] += int64_t(kProbOne) - total;
  if (freq[largest] < 1)
    fail(ErrorCode::kNumeric, "coding table quantization failed");

  t.cum.assign(nb + 1, 0);
  for (int i = 0; i < nb; ++i)
    t.cum[i + 1] = t.cum[i] + uint32_t(freq[i]);
  return t;
}

std::vector<uint8_t>
symEncode(const FactorizedModel& model, const ParamStore& store, const Mat<int32_t>& values)
{
  const int channels = model.channels();
  if (values.rows > 0 && values.cols != channels)
    fail(ErrorCode::kInvalidArgument, "symEncode: channel mismatch");

  std::vector<CodingTable> tables;
  ByteWriter w;
  w.u16(uint16_t(channels));
  for (int c = 0; c < channels; ++c) {
    const auto [lo, hi] = model.bounds(store, c);
    w.i32(lo);
    w.i32(hi);
    tables.push_back(buildCodingTable(model, store, c, lo, hi));
  }

  RangeEncoder enc;
  for (int i = 0; i < values.rows; ++i) {
    for (int c = 0; c < channels; ++c) {
      const auto& t = tables[c];
      const int32_t v = values(i, c);
      if (v < t.yMin || v > t.yMax) {
        const int s = v < t.yMin ? 0 : t.numSymbols() - 1;
        enc.encode(t.cum[s], t.freq(s));
        encodeRaw32(enc, v);
      } else {
        const int s = v - t.yMin + 1;
        enc.encode(t.cum[s], t.freq(s));
      }
    }
  }
  const auto bytes = enc.finish();
  w.u32(uint32_t(bytes.size()));
  w.bytes(bytes);
  return w.take();
}

Mat<int32_t>
symDecode(const FactorizedModel& model, const ParamStore& store, std::span<const uint8_t> payload,
          int rows)
{
  ByteReader r(payload);
  const int channels = r.u16();
  if (channels != model.channels())
    fail(ErrorCode::kModelMismatch, "feature payload has " + std::to_string(channels)
         + " channels, model has " + std::to_string(model.channels()));
  std::vector<CodingTable> tables;
  for (int c = 0; c < channels; ++c) {
    const int32_t lo = r.i32();
    const int32_t hi = r.i32();
    tables.push_back(buildCodingTable(model, store, c, lo, hi));
  }
  const uint32_t length = r.u32();
  if (length != r.remaining())
    fail(ErrorCode::kLengthMismatch, "feature payload length " + std::to_string(length)
         + " does not match " + std::to_string(r.remaining()) + " available bytes");
  RangeDecoder dec(r.bytes(length));

  Mat<int32_t> out(rows, channels);
  for (int i = 0; i < rows; ++i) {
    for (int c = 0; c < channels; ++c) {
      const auto& t = tables[c];
      const uint32_t target = dec.target();
      const int s = int(std::upper_bound(t.cum.begin(), t.cum.end(), target) - t.cum.begin()) - 1;
      dec.consume(t.cum[s], t.freq(s));
      if (s == 0 || s == t.numSymbols() - 1) {
        const int32_t v = decodeRaw32(dec);
        if ((s == 0 && v >= t.yMin) || (s != 0 && v <= t.yMax))
          fail(ErrorCode::kCorruptStream, "escape value inside the coded support");
        out(i, c) = v;
      } else {
        out(i, c) = t.yMin + s - 1;
      }
    }
  }
  dec.finish();
  return out;
}

//============================================================================

double
fitFactorized(ParamStore& store, const FactorizedModel& model, const Mat<int32_t>& samples,
              int steps, double lr)
{
  Adam adam(store);
  const std::vector<int> which(model.tensors().begin(), model.tensors().end());
  Mat<float> y(samples.rows, samples.cols);
  for (size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = float(samples.data[i]);
  const double count = double(std::max<size_t>(1, samples.size()));

  for (int step = 0; step < steps; ++step) {
    Tape<float> tape(store);
    const auto bits = tape.factorizedBits(tape.input(y), model.leaves(tape), float(kTailMass));
    const auto loss = tape.scale(bits, float(1.0 / count));
    Gradient grad(store);
    tape.backward(loss, grad);
    adam.step(store, grad, lr, which);
  }
  model.updateBounds(store);
  return model.bits(store, samples) / count;
}

Mat<int32_t>
sampleFactorized(const FactorizedModel& model, const ParamStore& store, int rows, Rng& rng)
{
  Mat<int32_t> out(rows, model.channels());
  for (int c = 0; c < model.channels(); ++c) {
    const auto [lo, hi] = model.bounds(store, c);
    std::vector<double> cum;
    double acc = 0.0;
    for (int32_t v = lo; v <= hi; ++v) {
      acc += model.pmf(store, c, v);
      cum.push_back(acc);
    }
    for (int i = 0; i < rows; ++i) {
      const double u = rng.uniform() * acc;
      const size_t k = std::min<size_t>(
        size_t(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin()), cum.size() - 1);
      out(i, c) = lo + int32_t(k);
    }
  }
  return out;
}

}  // namespace upcg
