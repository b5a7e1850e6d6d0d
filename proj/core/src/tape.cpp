#include "upcg/tape.hpp"

#include "upcg/errors.hpp"
#include "upcg/factorized_net.hpp"

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

namespace upcg {

namespace {

template <typename T>
void
requireShape(const Mat<T>& m, int rows, int cols, const char* what)
{
  if (m.rows != rows || m.cols != cols)
    fail(ErrorCode::kInvalidArgument,
         std::string(what) + ": shape mismatch (" + std::to_string(m.rows) + "x"
           + std::to_string(m.cols) + " vs " + std::to_string(rows) + "x"
           + std::to_string(cols) + ")");
}

template <typename T>
void
fillBias(Mat<T>& out, const Mat<T>& bias)
{
  for (int i = 0; i < out.rows; ++i)
    std::copy_n(bias.data.data(), out.cols, out.row(i));
}

std::vector<int32_t>
widen(const std::vector<uint8_t>& v)
{
  return std::vector<int32_t>(v.begin(), v.end());
}

template <typename T>
cdfnet::View<T>
channelView(const std::array<const Mat<T>*, 11>& m, int c)
{
  using namespace cdfnet;
  View<T> v;
  for (int k = 0; k < kLayers; ++k) {
    v.h[k] = m[k]->data.data() + size_t(c) * matrixSize(k);
    v.b[k] = m[4 + k]->data.data() + size_t(c) * vectorSize(k);
  }
  for (int k = 0; k < kLayers - 1; ++k)
    v.a[k] = m[8 + k]->data.data() + size_t(c) * vectorSize(k);
  return v;
}

template <typename T>
cdfnet::GradView<T>
channelGradView(const std::array<Mat<T>*, 11>& m, int c)
{
  using namespace cdfnet;
  GradView<T> v;
  for (int k = 0; k < kLayers; ++k) {
    v.h[k] = m[k]->data.data() + size_t(c) * matrixSize(k);
    v.b[k] = m[4 + k]->data.data() + size_t(c) * vectorSize(k);
  }
  for (int k = 0; k < kLayers - 1; ++k)
    v.a[k] = m[8 + k]->data.data() + size_t(c) * vectorSize(k);
  return v;
}

// Probability mass of the unit bin centred at y together with the logits
// at both bin edges. Evaluated on the numerically favourable side of the
// logistic.
template <typename T>
T
binMass(T upper, T lower)
{
  using cdfnet::sigmoid;
  if (upper + lower > T(0))
    return sigmoid(-lower) - sigmoid(-upper);
  return sigmoid(upper) - sigmoid(lower);
}

}  // namespace

//============================================================================

template <typename T>
void
Tape<T>::overrideParam(int paramIndex, std::vector<T> values)
{
  if (values.size() != (*_params)[paramIndex].size())
    fail(ErrorCode::kInvalidArgument, "overrideParam: size mismatch");
  _overrides[paramIndex] = std::move(values);
}

template <typename T>
typename Tape<T>::Id
Tape<T>::push(Node node)
{
  _nodes.push_back(std::move(node));
  return Id(_nodes.size() - 1);
}

template <typename T>
void
Tape<T>::notePattern(uint64_t h)
{
  _pattern ^= h + 0x9e3779b97f4a7c15ull + (_pattern << 6) + (_pattern >> 2);
}

template <typename T>
void
Tape<T>::noteMask(const Mat<T>& m)
{
  if (!_trackPattern)
    return;
  uint64_t h = 0xcbf29ce484222325ull;
  for (T v : m.data) {
    h ^= uint64_t(v > T(0));
    h *= 0x100000001b3ull;
  }
  notePattern(h);
}

template <typename T>
typename Tape<T>::Id
Tape<T>::input(Mat<T> value)
{
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::param(int paramIndex)
{
  auto it = _paramNodes.find(paramIndex);
  if (it != _paramNodes.end())
    return it->second;

  const ParamTensor& p = (*_params)[paramIndex];
  const int cols = p.dims.empty() ? 1 : p.dims.back();
  const int rows = cols == 0 ? 0 : int(p.size() / size_t(cols));
  Node n;
  n.op = Op::kParam;
  n.param = paramIndex;
  n.value = Mat<T>(rows, cols);
  auto ov = _overrides.find(paramIndex);
  if (ov != _overrides.end()) {
    n.value.data = ov->second;
  } else {
    for (size_t i = 0; i < p.size(); ++i)
      n.value.data[i] = T(p.values[i]);
  }
  const Id id = push(std::move(n));
  _paramNodes.emplace(paramIndex, id);
  return id;
}

template <typename T>
typename Tape<T>::Id
Tape<T>::conv(Id x, Id w, Id b, std::shared_ptr<const KernelMap> map)
{
  const Mat<T>& X = value(x);
  const Mat<T>& W = value(w);
  const Mat<T>& B = value(b);
  const int cin = X.cols;
  const int cout = W.cols;
  const int k3 = map->numOffsets();
  requireShape(W, k3 * cin, cout, "conv weight");
  requireShape(B, 1, cout, "conv bias");
  if (map->numRows() != X.rows)
    fail(ErrorCode::kInvalidArgument, "conv: kernel map does not match input rows");

  Mat<T> out(map->numRows(), cout);
  fillBias(out, B);
  const kernels::Pairs pairs{out.rows, map->rowStart.data(), map->offset.data(),
                            map->input.data()};
  kernels::gatherMultiply(out.data.data(), cout, X.data.data(), cin, W.data.data(), k3, pairs);
  _macs += uint64_t(map->numPairs()) * cin * cout;

  Node n;
  n.op = Op::kConv;
  n.a = x;
  n.b = w;
  n.c = b;
  n.value = std::move(out);
  n.aux = std::move(map);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::upsample(Id x, Id w, Id b, std::shared_ptr<const UpsampleMap> map)
{
  const Mat<T>& X = value(x);
  const Mat<T>& W = value(w);
  const Mat<T>& B = value(b);
  const int cin = X.cols;
  const int cout = W.cols;
  requireShape(W, 8 * cin, cout, "upsample weight");
  requireShape(B, 1, cout, "upsample bias");

  const int n = int(map->children.size());
  Mat<T> out(n, cout);
  fillBias(out, B);
  const auto octant = widen(map->octant);
  const kernels::Pairs pairs{n, nullptr, octant.data(), map->parent.data()};
  kernels::gatherMultiply(out.data.data(), cout, X.data.data(), cin, W.data.data(), 8, pairs);
  _macs += uint64_t(n) * cin * cout;

  Node node;
  node.op = Op::kUpsample;
  node.a = x;
  node.b = w;
  node.c = b;
  node.value = std::move(out);
  node.aux = std::move(map);
  return push(std::move(node));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::downsample(Id x, Id w, Id b, std::shared_ptr<const DownsampleMap> map)
{
  const Mat<T>& X = value(x);
  const Mat<T>& W = value(w);
  const Mat<T>& B = value(b);
  const int cin = X.cols;
  const int cout = W.cols;
  requireShape(W, 8 * cin, cout, "downsample weight");
  requireShape(B, 1, cout, "downsample bias");
  if (int(map->parent.size()) != X.rows)
    fail(ErrorCode::kInvalidArgument, "downsample: map does not match input rows");

  Mat<T> out(int(map->parents.size()), cout);
  fillBias(out, B);
  const auto octant = widen(map->octant);
  const kernels::Pairs byChild{X.rows, nullptr, octant.data(), map->parent.data()};
  const auto byParent = kernels::transposePairs(byChild, out.rows);
  kernels::gatherMultiply(out.data.data(), cout, X.data.data(), cin, W.data.data(), 8,
                          byParent.view());
  _macs += uint64_t(X.rows) * cin * cout;

  Node node;
  node.op = Op::kDownsample;
  node.a = x;
  node.b = w;
  node.c = b;
  node.value = std::move(out);
  node.aux = std::move(map);
  return push(std::move(node));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::dense(Id x, Id w, Id b)
{
  const Mat<T>& X = value(x);
  const Mat<T>& W = value(w);
  const Mat<T>& B = value(b);
  requireShape(W, X.cols, W.cols, "dense weight");
  requireShape(B, 1, W.cols, "dense bias");

  Mat<T> out(X.rows, W.cols);
  fillBias(out, B);
  kernels::gatherMultiply(out.data.data(), W.cols, X.data.data(), X.cols, W.data.data(), 1,
                          kernels::Pairs{X.rows});
  _macs += uint64_t(X.rows) * X.cols * W.cols;

  Node n;
  n.op = Op::kDense;
  n.a = x;
  n.b = w;
  n.c = b;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::relu(Id x)
{
  Mat<T> out = value(x);
  for (auto& v : out.data)
    v = v > T(0) ? v : T(0);
  noteMask(out);
  Node n;
  n.op = Op::kRelu;
  n.a = x;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::logistic(Id x)
{
  Mat<T> out = value(x);
  for (auto& v : out.data)
    v = cdfnet::sigmoid(v);
  Node n;
  n.op = Op::kLogistic;
  n.a = x;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::exp(Id x)
{
  Mat<T> out = value(x);
  for (auto& v : out.data)
    v = std::exp(v);
  Node n;
  n.op = Op::kExp;
  n.a = x;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::add(Id a, Id b)
{
  const Mat<T>& A = value(a);
  const Mat<T>& B = value(b);
  const bool bcast = B.rows == 1 && A.rows != 1;
  if (!bcast)
    requireShape(B, A.rows, A.cols, "add");
  else
    requireShape(B, 1, A.cols, "add broadcast");
  Mat<T> out = A;
  for (int i = 0; i < out.rows; ++i) {
    T* o = out.row(i);
    const T* r = B.row(bcast ? 0 : i);
    for (int c = 0; c < out.cols; ++c)
      o[c] += r[c];
  }
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::mul(Id a, Id b)
{
  const Mat<T>& A = value(a);
  const Mat<T>& B = value(b);
  const bool bcast = B.rows == 1 && A.rows != 1;
  if (!bcast)
    requireShape(B, A.rows, A.cols, "mul");
  else
    requireShape(B, 1, A.cols, "mul broadcast");
  Mat<T> out = A;
  for (int i = 0; i < out.rows; ++i) {
    T* o = out.row(i);
    const T* r = B.row(bcast ? 0 : i);
    for (int c = 0; c < out.cols; ++c)
      o[c] *= r[c];
  }
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::div(Id a, Id b)
{
  const Mat<T>& A = value(a);
  const Mat<T>& B = value(b);
  const bool bcast = B.rows == 1 && A.rows != 1;
  if (!bcast)
    requireShape(B, A.rows, A.cols, "div");
  else
    requireShape(B, 1, A.cols, "div broadcast");
  Mat<T> out = A;
  for (int i = 0; i < out.rows; ++i) {
    T* o = out.row(i);
    const T* r = B.row(bcast ? 0 : i);
    for (int c = 0; c < out.cols; ++c)
      o[c] /= r[c];
  }
  Node n;
  n.op = Op::kDiv;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::scale(Id x, T s)
{
  Mat<T> out = value(x);
  for (auto& v : out.data)
    v *= s;
  Node n;
  n.op = Op::kScale;
  n.a = x;
  n.factor = s;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::concat(Id a, Id b)
{
  const Mat<T>& A = value(a);
  const Mat<T>& B = value(b);
  if (A.rows != B.rows)
    fail(ErrorCode::kInvalidArgument, "concat: row mismatch");
  Mat<T> out(A.rows, A.cols + B.cols);
  for (int i = 0; i < A.rows; ++i) {
    std::copy_n(A.row(i), A.cols, out.row(i));
    std::copy_n(B.row(i), B.cols, out.row(i) + A.cols);
  }
  Node n;
  n.op = Op::kConcat;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::gather(Id x, std::vector<int32_t> rows)
{
  const Mat<T>& X = value(x);
  Mat<T> out(int(rows.size()), X.cols);
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(X.row(rows[i]), X.cols, out.row(int(i)));
  Node n;
  n.op = Op::kGather;
  n.a = x;
  n.rowsA = std::move(rows);
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::merge(Id a, std::vector<int32_t> rowsA, Id b, std::vector<int32_t> rowsB, int rows)
{
  const Mat<T>& A = value(a);
  const Mat<T>& B = value(b);
  if (A.rows != int(rowsA.size()) || B.rows != int(rowsB.size()))
    fail(ErrorCode::kInvalidArgument, "merge: index list mismatch");
  if (int(rowsA.size() + rowsB.size()) != rows)
    fail(ErrorCode::kInvalidArgument, "merge: rows do not partition output");
  const int cols = std::max(A.cols, B.cols);
  if ((A.rows > 0 && A.cols != cols) || (B.rows > 0 && B.cols != cols))
    fail(ErrorCode::kInvalidArgument, "merge: channel mismatch");
  Mat<T> out(rows, cols);
  for (size_t i = 0; i < rowsA.size(); ++i)
    std::copy_n(A.row(int(i)), cols, out.row(rowsA[i]));
  for (size_t i = 0; i < rowsB.size(); ++i)
    std::copy_n(B.row(int(i)), cols, out.row(rowsB[i]));
  Node n;
  n.op = Op::kMerge;
  n.a = a;
  n.b = b;
  n.rowsA = std::move(rowsA);
  n.rowsB = std::move(rowsB);
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::sum(Id x)
{
  T acc = T(0);
  for (T v : value(x).data)
    acc += v;
  Node n;
  n.op = Op::kSum;
  n.a = x;
  n.value = Mat<T>(1, 1, acc);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::bce(Id logits, std::vector<uint8_t> targets, T factor)
{
  const Mat<T>& Z = value(logits);
  if (Z.cols != 1 || Z.rows != int(targets.size()))
    fail(ErrorCode::kInvalidArgument, "bce: logits/targets mismatch");
  T acc = T(0);
  for (int i = 0; i < Z.rows; ++i) {
    const T z = targets[i] ? -Z.data[i] : Z.data[i];
    acc += cdfnet::softplus(z);
  }
  Node n;
  n.op = Op::kBce;
  n.a = logits;
  n.factor = factor;
  n.targets = std::move(targets);
  n.value = Mat<T>(1, 1, factor * acc);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id
Tape<T>::factorizedBits(Id y, const std::array<Id, 11>& model, T tail)
{
  const Mat<T>& Y = value(y);
  std::array<const Mat<T>*, 11> m;
  for (int k = 0; k < 11; ++k)
    m[k] = &value(model[k]);
  const int channels = Y.cols;
  if (m[0]->data.size() != size_t(channels) * cdfnet::matrixSize(0))
    fail(ErrorCode::kInvalidArgument, "factorizedBits: channel count mismatch");

  uint64_t h = 0;
  T bits = T(0);
  for (int c = 0; c < channels; ++c) {
    const auto view = channelView(m, c);
    for (int i = 0; i < Y.rows; ++i) {
      const T v = Y(i, c);
      const T mass = binMass(cdfnet::logit(view, v + T(0.5)), cdfnet::logit(view, v - T(0.5)));
      const bool floored = !(mass > tail);
      h = h * 31 + uint64_t(floored);
      bits -= std::log2(floored ? tail : mass);
    }
  }
  if (_trackPattern)
    notePattern(h);

  Node n;
  n.op = Op::kFactorized;
  n.a = y;
  n.model = model;
  n.factor = tail;
  n.value = Mat<T>(1, 1, bits);
  return push(std::move(n));
}

//============================================================================

template <typename T>
void
Tape<T>::backward(Id loss, Gradient& grad)
{
  if (value(loss).size() != 1)
    fail(ErrorCode::kInvalidArgument, "backward: loss must be scalar");

  const int count = int(_nodes.size());
  std::vector<bool> needs(count, false);
  for (int i = 0; i < count; ++i) {
    const Node& n = _nodes[i];
    if (n.op == Op::kParam) {
      needs[i] = true;
      continue;
    }
    if (n.a >= 0 && needs[n.a])
      needs[i] = true;
    if (n.b >= 0 && needs[n.b])
      needs[i] = true;
    if (n.c >= 0 && needs[n.c])
      needs[i] = true;
    if (n.op == Op::kFactorized)
      for (Id m : n.model)
        needs[i] = needs[i] || needs[m];
  }

  std::vector<Mat<T>> grads(count);
  auto G = [&](Id id) -> Mat<T>& {
    Mat<T>& g = grads[id];
    if (g.data.empty() && !_nodes[id].value.data.empty())
      g = Mat<T>(_nodes[id].value.rows, _nodes[id].value.cols);
    return g;
  };
  G(loss).data[0] = T(1);

  for (int id = loss; id >= 0; --id) {
    if (!needs[id] || grads[id].data.empty())
      continue;
    const Node& n = _nodes[id];
    const Mat<T>& dy = grads[id];

    switch (n.op) {
    case Op::kInput:
      break;

    case Op::kParam: {
      auto& dst = grad.tensors.at(n.param);
      for (size_t i = 0; i < dst.size(); ++i)
        dst[i] += double(dy.data[i]);
      break;
    }

    case Op::kConv: {
      const auto& map = *std::static_pointer_cast<const KernelMap>(n.aux);
      const Mat<T>& X = value(n.a);
      const Mat<T>& W = value(n.b);
      const int cin = X.cols;
      const int cout = W.cols;
      if (needs[n.c]) {
        Mat<T>& db = G(n.c);
        for (int i = 0; i < dy.rows; ++i)
          for (int co = 0; co < cout; ++co)
            db.data[co] += dy(i, co);
      }
      const kernels::Pairs pairs{dy.rows, map.rowStart.data(), map.offset.data(),
                                 map.input.data()};
      if (needs[n.b])
        kernels::outerAccumulate(G(n.b).data.data(), X.data.data(), cin, dy.data.data(), cout,
                                 pairs);
      if (needs[n.a]) {
        // Stride-1 maps are symmetric: the entry (i, o, j) has a twin
        // (j, taps-1-o, i), so the input gradient is a gather as well.
        const int taps = map.numOffsets();
        const auto wt = kernels::transposeTaps(W.data.data(), taps, cin, cout);
        kernels::gatherMultiply(G(n.a).data.data(), cin, dy.data.data(), cout, wt.data(), taps,
                                pairs, true);
      }
      break;
    }

    case Op::kUpsample: {
      const auto& map = *std::static_pointer_cast<const UpsampleMap>(n.aux);
      const Mat<T>& X = value(n.a);
      const Mat<T>& W = value(n.b);
      const int cin = X.cols;
      const int cout = W.cols;
      if (needs[n.c]) {
        Mat<T>& db = G(n.c);
        for (int i = 0; i < dy.rows; ++i)
          for (int co = 0; co < cout; ++co)
            db.data[co] += dy(i, co);
      }
      const auto octant = widen(map.octant);
      const kernels::Pairs byChild{dy.rows, nullptr, octant.data(), map.parent.data()};
      if (needs[n.b])
        kernels::outerAccumulate(G(n.b).data.data(), X.data.data(), cin, dy.data.data(), cout,
                                 byChild);
      if (needs[n.a]) {
        const auto wt = kernels::transposeTaps(W.data.data(), 8, cin, cout);
        const auto byParent = kernels::transposePairs(byChild, X.rows);
        kernels::gatherMultiply(G(n.a).data.data(), cin, dy.data.data(), cout, wt.data(), 8,
                                byParent.view());
      }
      break;
    }

    case Op::kDownsample: {
      const auto& map = *std::static_pointer_cast<const DownsampleMap>(n.aux);
      const Mat<T>& X = value(n.a);
      const Mat<T>& W = value(n.b);
      const int cin = X.cols;
      const int cout = W.cols;
      if (needs[n.c]) {
        Mat<T>& db = G(n.c);
        for (int i = 0; i < dy.rows; ++i)
          for (int co = 0; co < cout; ++co)
            db.data[co] += dy(i, co);
      }
      const auto octant = widen(map.octant);
      const kernels::Pairs byChild{X.rows, nullptr, octant.data(), map.parent.data()};
      if (needs[n.b]) {
        const auto byParent = kernels::transposePairs(byChild, dy.rows);
        kernels::outerAccumulate(G(n.b).data.data(), X.data.data(), cin, dy.data.data(), cout,
                                 byParent.view());
      }
      if (needs[n.a]) {
        const auto wt = kernels::transposeTaps(W.data.data(), 8, cin, cout);
        kernels::gatherMultiply(G(n.a).data.data(), cin, dy.data.data(), cout, wt.data(), 8,
                                byChild);
      }
      break;
    }

    case Op::kDense: {
      const Mat<T>& X = value(n.a);
      const Mat<T>& W = value(n.b);
      const int cin = X.cols;
      const int cout = W.cols;
      if (needs[n.c]) {
        Mat<T>& db = G(n.c);
        for (int i = 0; i < dy.rows; ++i)
          for (int co = 0; co < cout; ++co)
            db.data[co] += dy(i, co);
      }
      const kernels::Pairs rows{dy.rows};
      if (needs[n.b])
        kernels::outerAccumulate(G(n.b).data.data(), X.data.data(), cin, dy.data.data(), cout,
                                 rows);
      if (needs[n.a]) {
        const auto wt = kernels::transposeTaps(W.data.data(), 1, cin, cout);
        kernels::gatherMultiply(G(n.a).data.data(), cin, dy.data.data(), cout, wt.data(), 1,
                                rows);
      }
      break;
    }

    case Op::kRelu: {
      if (!needs[n.a])
        break;
      Mat<T>& dx = G(n.a);
      for (size_t i = 0; i < dy.data.size(); ++i)
        if (n.value.data[i] > T(0))
          dx.data[i] += dy.data[i];
      break;
    }

    case Op::kLogistic: {
      if (!needs[n.a])
        break;
      Mat<T>& dx = G(n.a);
      for (size_t i = 0; i < dy.data.size(); ++i) {
        const T y = n.value.data[i];
        dx.data[i] += dy.data[i] * y * (T(1) - y);
      }
      break;
    }

    case Op::kExp: {
      if (!needs[n.a])
        break;
      Mat<T>& dx = G(n.a);
      for (size_t i = 0; i < dy.data.size(); ++i)
        dx.data[i] += dy.data[i] * n.value.data[i];
      break;
    }

    case Op::kAdd:
    case Op::kMul: {
      const Mat<T>& A = value(n.a);
      const Mat<T>& B = value(n.b);
      const bool bcast = B.rows == 1 && A.rows != 1;
      const bool isMul = n.op == Op::kMul;
      if (needs[n.a]) {
        Mat<T>& da = G(n.a);
        for (int i = 0; i < A.rows; ++i)
          for (int c = 0; c < A.cols; ++c)
            da(i, c) += isMul ? dy(i, c) * B(bcast ? 0 : i, c) : dy(i, c);
      }
      if (needs[n.b]) {
        Mat<T>& db = G(n.b);
        for (int i = 0; i < A.rows; ++i)
          for (int c = 0; c < A.cols; ++c)
            db(bcast ? 0 : i, c) += isMul ? dy(i, c) * A(i, c) : dy(i, c);
      }
      break;
    }

    case Op::kDiv: {
      const Mat<T>& A = value(n.a);
      const Mat<T>& B = value(n.b);
      const bool bcast = B.rows == 1 && A.rows != 1;
      if (needs[n.a]) {
        Mat<T>& da = G(n.a);
        for (int i = 0; i < A.rows; ++i)
          for (int c = 0; c < A.cols; ++c)
            da(i, c) += dy(i, c) / B(bcast ? 0 : i, c);
      }
      if (needs[n.b]) {
        Mat<T>& db = G(n.b);
        for (int i = 0; i < A.rows; ++i) {
          for (int c = 0; c < A.cols; ++c) {
            const T r = B(bcast ? 0 : i, c);
            db(bcast ? 0 : i, c) -= dy(i, c) * A(i, c) / (r * r);
          }
        }
      }
      break;
    }

    case Op::kScale: {
      if (!needs[n.a])
        break;
      Mat<T>& dx = G(n.a);
      for (size_t i = 0; i < dy.data.size(); ++i)
        dx.data[i] += n.factor * dy.data[i];
      break;
    }

    case Op::kConcat: {
      const int ca = value(n.a).cols;
      const int cb = value(n.b).cols;
      if (needs[n.a]) {
        Mat<T>& da = G(n.a);
        for (int i = 0; i < dy.rows; ++i)
          for (int c = 0; c < ca; ++c)
            da(i, c) += dy(i, c);
      }
      if (needs[n.b]) {
        Mat<T>& db = G(n.b);
        for (int i = 0; i < dy.rows; ++i)
          for (int c = 0; c < cb; ++c)
            db(i, c) += dy(i, ca + c);
      }
      break;
    }

    case Op::kGather: {
      if (!needs[n.a])
        break;
      Mat<T>& dx = G(n.a);
      for (size_t i = 0; i < n.rowsA.size(); ++i) {
        T* d = dx.row(n.rowsA[i]);
        const T* g = dy.row(int(i));
        for (int c = 0; c < dx.cols; ++c)
          d[c] += g[c];
      }
      break;
    }

    case Op::kMerge: {
      if (needs[n.a] && !n.rowsA.empty()) {
        Mat<T>& da = G(n.a);
        for (size_t i = 0; i < n.rowsA.size(); ++i)
          for (int c = 0; c < da.cols; ++c)
            da(int(i), c) += dy(n.rowsA[i], c);
      }
      if (needs[n.b] && !n.rowsB.empty()) {
        Mat<T>& db = G(n.b);
        for (size_t i = 0; i < n.rowsB.size(); ++i)
          for (int c = 0; c < db.cols; ++c)
            db(int(i), c) += dy(n.rowsB[i], c);
      }
      break;
    }

    case Op::kSum: {
      if (!needs[n.a])
        break;
      Mat<T>& dx = G(n.a);
      for (auto& v : dx.data)
        v += dy.data[0];
      break;
    }

    case Op::kBce: {
      if (!needs[n.a])
        break;
      const Mat<T>& Z = value(n.a);
      Mat<T>& dz = G(n.a);
      const T g = dy.data[0] * n.factor;
      for (int i = 0; i < Z.rows; ++i)
        dz.data[i] += g * (cdfnet::sigmoid(Z.data[i]) - T(n.targets[i]));
      break;
    }

    case Op::kFactorized: {
      const Mat<T>& Y = value(n.a);
      std::array<const Mat<T>*, 11> m;
      std::array<Mat<T>*, 11> gm;
      std::array<Mat<T>, 11> scratch;
      for (int k = 0; k < 11; ++k) {
        m[k] = &value(n.model[k]);
        if (needs[n.model[k]]) {
          gm[k] = &G(n.model[k]);
        } else {
          scratch[k] = Mat<T>(m[k]->rows, m[k]->cols);
          gm[k] = &scratch[k];
        }
      }
      Mat<T>* dyIn = needs[n.a] ? &G(n.a) : nullptr;
      const T upstream = dy.data[0];
      const T tail = n.factor;
      for (int c = 0; c < Y.cols; ++c) {
        const auto view = channelView(m, c);
        auto gview = channelGradView(gm, c);
        for (int i = 0; i < Y.rows; ++i) {
          const T v = Y(i, c);
          cdfnet::Cache<T> cu, cl;
          const T u = cdfnet::logit(view, v + T(0.5), &cu);
          const T l = cdfnet::logit(view, v - T(0.5), &cl);
          const T mass = binMass(u, l);
          if (!(mass > tail))
            continue;
          const T dmass = -upstream / (mass * T(std::numbers::ln2));
          const T su = cdfnet::sigmoid(u) * cdfnet::sigmoid(-u);
          const T sl = cdfnet::sigmoid(l) * cdfnet::sigmoid(-l);
          const T dxu = cdfnet::logitBackward(view, cu, dmass * su, &gview);
          const T dxl = cdfnet::logitBackward(view, cl, -dmass * sl, &gview);
          if (dyIn)
            (*dyIn)(i, c) += dxu + dxl;
        }
      }
      break;
    }
    }
  }

  for (const Node& n : _nodes) {
    if (n.op != Op::kParam)
      continue;
    for (double v : grad.tensors.at(n.param))
      if (!std::isfinite(v))
        fail(ErrorCode::kNumeric, "non-finite gradient for parameter " + (*_params)[n.param].name);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace upcg
