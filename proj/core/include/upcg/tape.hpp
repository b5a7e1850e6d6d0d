#pragma once

#include "upcg/matrix.hpp"
#include "upcg/params.hpp"
#include "upcg/sparse.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

namespace upcg {

// Primitive operations recorded on the tape.
enum class Op : uint8_t {
  kInput,
  kParam,
  kConv,        // stride-1 sparse convolution over a KernelMap
  kUpsample,    // transposed k=2 s=2 convolution
  kDownsample,  // k=2 s=2 convolution
  kDense,       // pointwise linear layer
  kRelu,
  kLogistic,
  kExp,
  kAdd,
  kMul,
  kDiv,
  kScale,
  kConcat,
  kGather,
  kMerge,
  kSum,
  kBce,         // fused binary cross entropy on logits
  kFactorized,  // fused factorized-model rate in bits
};

// Fixed tape of primitive ops with an analytic reverse pass. One tape
// records one forward evaluation; parameters are read from a ParamStore
// (optionally overridden per tensor for finite differencing).
template <typename T>
class Tape {
public:
  using Id = int32_t;

  explicit Tape(const ParamStore& params) : _params(&params) {}

  // Replaces the value a parameter leaf will take on this tape.
  void overrideParam(int paramIndex, std::vector<T> values);

  Id input(Mat<T> value);
  Id param(int paramIndex);

  Id conv(Id x, Id w, Id b, std::shared_ptr<const KernelMap> map);
  Id upsample(Id x, Id w, Id b, std::shared_ptr<const UpsampleMap> map);
  Id downsample(Id x, Id w, Id b, std::shared_ptr<const DownsampleMap> map);
  Id dense(Id x, Id w, Id b);

  Id relu(Id x);
  Id logistic(Id x);
  Id exp(Id x);
  // b may have one row, in which case it is broadcast over the rows of a.
  Id add(Id a, Id b);
  Id mul(Id a, Id b);
  Id div(Id a, Id b);
  Id scale(Id x, T s);
  Id concat(Id a, Id b);
  Id gather(Id x, std::vector<int32_t> rows);
  // out[rowsA[i]] = a[i], out[rowsB[j]] = b[j]; rows must partition [0, n).
  Id merge(Id a, std::vector<int32_t> rowsA, Id b, std::vector<int32_t> rowsB, int n);
  Id sum(Id x);

  // factor * sum_k -ln p_k(target_k), p = logistic(logit). Scalar output.
  Id bce(Id logits, std::vector<uint8_t> targets, T factor);

  // sum over rows and channels of -log2(max(pmf(y), tail)) where
  // pmf(y) = CDF(y + 1/2) - CDF(y - 1/2) under the factorized model whose
  // eleven tensors are given as parameter leaves (H0..H3, b0..b3, a0..a2).
  Id factorizedBits(Id y, const std::array<Id, 11>& model, T tail);

  const Mat<T>& value(Id id) const { return _nodes[id].value; }
  T scalar(Id id) const { return _nodes[id].value.data.at(0); }
  int size() const { return int(_nodes.size()); }

  // Reverse pass from a scalar node; accumulates into grad.
  void backward(Id loss, Gradient& grad);

  // Multiply-accumulate operations executed by conv/dense layers so far.
  uint64_t macs() const { return _macs; }
  void addMacs(uint64_t n) { _macs += n; }

  // Hash over every discrete decision taken during the forward pass
  // (ReLU masks, floors, data-dependent splits). Finite differences are
  // only meaningful between evaluations with equal hashes.
  void trackPattern(bool on) { _trackPattern = on; }
  void notePattern(uint64_t h);
  uint64_t pattern() const { return _pattern; }

private:
  struct Node {
    Op op = Op::kInput;
    Id a = -1, b = -1, c = -1;
    int param = -1;
    T factor = T(0);
    Mat<T> value;
    std::shared_ptr<const void> aux;
    std::vector<int32_t> rowsA, rowsB;
    std::vector<uint8_t> targets;
    std::array<Id, 11> model{};
  };

  Id push(Node node);
  void noteMask(const Mat<T>& m);

  const ParamStore* _params;
  std::vector<Node> _nodes;
  std::unordered_map<int, Id> _paramNodes;
  std::unordered_map<int, std::vector<T>> _overrides;
  uint64_t _macs = 0;
  bool _trackPattern = false;
  uint64_t _pattern = 0xcbf29ce484222325ull;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace upcg
