#pragma once

#include "upcg/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace upcg {

struct ParamTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<float> values;

  size_t size() const { return values.size(); }
};

// Named collection of every trainable tensor (the network parameters).
// Tensors are addressed by the index returned from add().
class ParamStore {
public:
  int add(std::string name, std::vector<int> dims);

  int find(std::string_view name) const;
  int index(std::string_view name) const;  // throws when absent
  bool contains(std::string_view name) const { return find(name) >= 0; }

  ParamTensor& operator[](int i) { return _tensors[i]; }
  const ParamTensor& operator[](int i) const { return _tensors[i]; }

  int numTensors() const { return int(_tensors.size()); }
  size_t numScalars() const;

  // Indices of every tensor whose name starts with `prefix`.
  std::vector<int> withPrefix(std::string_view prefix) const;

  // Hash of the serialized tensor section; recorded in bitstreams.
  uint64_t modelId() const;

  std::vector<uint8_t> serialize() const;
  static ParamStore deserialize(std::span<const uint8_t> bytes);

  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

  // Throws kNumeric naming the first tensor holding a NaN or Inf.
  void checkFinite() const;

private:
  std::vector<uint8_t> serializeTensors() const;

  std::vector<ParamTensor> _tensors;
};

// Glorot-style uniform(-a, a) with a = sqrt(6 / (fanIn + fanOut)).
void initGlorot(ParamTensor& t, int fanIn, int fanOut, Rng& rng);

//============================================================================

// Partial derivatives, shape-congruent with a ParamStore.
struct Gradient {
  std::vector<std::vector<double>> tensors;

  Gradient() = default;
  explicit Gradient(const ParamStore& params);

  void setZero();
  void accumulate(const Gradient& other);
  void scale(double s);

  // Throws kNumeric naming the offending parameter.
  void checkFinite(const ParamStore& params) const;
};

// Bias-corrected Adam over a selected subset of tensors.
class Adam {
public:
  explicit Adam(const ParamStore& params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(ParamStore& params, const Gradient& grad, double lr, std::span<const int> which);

  int64_t steps() const { return _t; }

private:
  double _beta1, _beta2, _eps;
  int64_t _t = 0;
  std::vector<std::vector<double>> _m;
  std::vector<std::vector<double>> _v;
};

// Cosine decay from lrStart to lrEnd over totalSteps.
double cosineLr(double lrStart, double lrEnd, int64_t step, int64_t totalSteps);

}  // namespace upcg
