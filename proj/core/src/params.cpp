#include "upcg/params.hpp"

#include "upcg/byteio.hpp"
#include "upcg/errors.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace upcg {

namespace {
constexpr char kCheckpointMagic[4] = {'U', 'P', 'C', 'M'};
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

std::vector<uint8_t>
readFile(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCode::kIo, "cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void
writeFile(const std::string& path, std::span<const uint8_t> data)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    fail(ErrorCode::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  if (!out)
    fail(ErrorCode::kIo, "write failed for " + path);
}

//============================================================================

int
ParamStore::add(std::string name, std::vector<int> dims)
{
  if (find(name) >= 0)
    fail(ErrorCode::kInvalidArgument, "duplicate parameter " + name);
  size_t n = 1;
  for (int d : dims)
    n *= size_t(d);
  _tensors.push_back({std::move(name), std::move(dims), std::vector<float>(n, 0.0f)});
  return int(_tensors.size()) - 1;
}

int
ParamStore::find(std::string_view name) const
{
  for (size_t i = 0; i < _tensors.size(); ++i)
    if (_tensors[i].name == name)
      return int(i);
  return -1;
}

int
ParamStore::index(std::string_view name) const
{
  const int i = find(name);
  if (i < 0)
    fail(ErrorCode::kModelMismatch, "checkpoint lacks parameter " + std::string(name));
  return i;
}

size_t
ParamStore::numScalars() const
{
  size_t n = 0;
  for (const auto& t : _tensors)
    n += t.size();
  return n;
}

std::vector<int>
ParamStore::withPrefix(std::string_view prefix) const
{
  std::vector<int> out;
  for (size_t i = 0; i < _tensors.size(); ++i)
    if (std::string_view(_tensors[i].name).starts_with(prefix))
      out.push_back(int(i));
  return out;
}

std::vector<uint8_t>
ParamStore::serializeTensors() const
{
  ByteWriter w;
  w.u32(uint32_t(_tensors.size()));
  for (const auto& t : _tensors) {
    w.u32(uint32_t(t.name.size()));
    w.str(t.name);
    w.u32(uint32_t(t.dims.size()));
    for (int d : t.dims)
      w.u32(uint32_t(d));
    for (float v : t.values)
      w.f32(v);
  }
  return w.take();
}

uint64_t
ParamStore::modelId() const
{
  return fnv1a64(serializeTensors());
}

std::vector<uint8_t>
ParamStore::serialize() const
{
  const auto body = serializeTensors();
  ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const uint8_t*>(kCheckpointMagic), 4));
  w.u32(kCheckpointVersion);
  w.u64(fnv1a64(body));
  w.bytes(body);
  return w.take();
}

ParamStore
ParamStore::deserialize(std::span<const uint8_t> bytes)
{
  ByteReader r(bytes);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic))
    fail(ErrorCode::kBadMagic, "not a checkpoint (bad magic)");
  if (r.u32() != kCheckpointVersion)
    fail(ErrorCode::kBadVersion, "unsupported checkpoint version");
  const uint64_t id = r.u64();
  if (fnv1a64(bytes.subspan(r.pos())) != id)
    fail(ErrorCode::kCorruptStream, "checkpoint hash mismatch");

  ParamStore store;
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    const uint32_t rank = r.u32();
    if (rank > 8)
      fail(ErrorCode::kParse, "checkpoint tensor rank too large: " + name);
    std::vector<int> dims(rank);
    for (auto& d : dims)
      d = int(r.u32());
    const int idx = store.add(name, dims);
    for (auto& v : store[idx].values)
      v = r.f32();
  }
  if (r.remaining() != 0)
    fail(ErrorCode::kLengthMismatch, "trailing bytes in checkpoint");
  return store;
}

void
ParamStore::save(const std::string& path) const
{
  writeFile(path, serialize());
}

ParamStore
ParamStore::load(const std::string& path)
{
  return deserialize(readFile(path));
}

void
ParamStore::checkFinite() const
{
  for (const auto& t : _tensors)
    for (float v : t.values)
      if (!std::isfinite(v))
        fail(ErrorCode::kNumeric, "non-finite value in parameter " + t.name);
}

void
initGlorot(ParamTensor& t, int fanIn, int fanOut, Rng& rng)
{
  const double a = std::sqrt(6.0 / double(fanIn + fanOut));
  for (auto& v : t.values)
    v = float(rng.uniform(-a, a));
}

//============================================================================

Gradient::Gradient(const ParamStore& params)
{
  tensors.resize(params.numTensors());
  for (int i = 0; i < params.numTensors(); ++i)
    tensors[i].assign(params[i].size(), 0.0);
}

void
Gradient::setZero()
{
  for (auto& t : tensors)
    std::fill(t.begin(), t.end(), 0.0);
}

void
Gradient::accumulate(const Gradient& other)
{
  for (size_t i = 0; i < tensors.size(); ++i)
    for (size_t j = 0; j < tensors[i].size(); ++j)
      tensors[i][j] += other.tensors[i][j];
}

void
Gradient::scale(double s)
{
  for (auto& t : tensors)
    for (auto& v : t)
      v *= s;
}

void
Gradient::checkFinite(const ParamStore& params) const
{
  for (size_t i = 0; i < tensors.size(); ++i)
    for (double v : tensors[i])
      if (!std::isfinite(v))
        fail(ErrorCode::kNumeric, "non-finite gradient for parameter " + params[int(i)].name);
}

Adam::Adam(const ParamStore& params, double beta1, double beta2, double eps)
  : _beta1(beta1), _beta2(beta2), _eps(eps)
{
  _m.resize(params.numTensors());
  _v.resize(params.numTensors());
  for (int i = 0; i < params.numTensors(); ++i) {
    _m[i].assign(params[i].size(), 0.0);
    _v[i].assign(params[i].size(), 0.0);
  }
}

void
Adam::step(ParamStore& params, const Gradient& grad, double lr, std::span<const int> which)
{
  grad.checkFinite(params);
  ++_t;
  const double c1 = 1.0 - std::pow(_beta1, double(_t));
  const double c2 = 1.0 - std::pow(_beta2, double(_t));
  for (int i : which) {
    auto& values = params[i].values;
    const auto& g = grad.tensors[i];
    auto& m = _m[i];
    auto& v = _v[i];
    for (size_t j = 0; j < values.size(); ++j) {
      m[j] = _beta1 * m[j] + (1.0 - _beta1) * g[j];
      v[j] = _beta2 * v[j] + (1.0 - _beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      values[j] = float(double(values[j]) - lr * mhat / (std::sqrt(vhat) + _eps));
    }
  }
}

double
cosineLr(double lrStart, double lrEnd, int64_t step, int64_t totalSteps)
{
  if (totalSteps <= 1)
    return lrStart;
  const double t = std::min(1.0, double(step) / double(totalSteps - 1));
  return lrEnd + 0.5 * (lrStart - lrEnd) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace upcg
