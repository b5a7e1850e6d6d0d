#pragma once

#include <array>
#include <cmath>

namespace upcg {

// Per-channel monotone CDF network of the factorized entropy model:
// three hidden layers of width 3 with softplus-constrained matrices and
// tanh gates, followed by a logistic. The logit is a nondecreasing
// function of x for any parameter values.
namespace cdfnet {

constexpr int kLayers = 4;
constexpr std::array<int, kLayers + 1> kWidths = {1, 3, 3, 3, 1};
constexpr int kTensors = 11;  // H0..H3, b0..b3, a0..a2

inline int matrixSize(int k) { return kWidths[k + 1] * kWidths[k]; }
inline int vectorSize(int k) { return kWidths[k + 1]; }

template <typename T>
inline T softplus(T x)
{
  return x > T(20) ? x : std::log1p(std::exp(x));
}

template <typename T>
inline T sigmoid(T x)
{
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Pointers to one channel's slice of each tensor.
template <typename T>
struct View {
  std::array<const T*, kLayers> h;
  std::array<const T*, kLayers> b;
  std::array<const T*, kLayers - 1> a;
};

template <typename T>
struct GradView {
  std::array<T*, kLayers> h;
  std::array<T*, kLayers> b;
  std::array<T*, kLayers - 1> a;
};

template <typename T>
struct Cache {
  T in[kLayers][3];
  T pre[kLayers][3];
};

template <typename T>
T logit(const View<T>& p, T x, Cache<T>* cache = nullptr)
{
  T v[3] = {x, T(0), T(0)};
  for (int k = 0; k < kLayers; ++k) {
    const int nin = kWidths[k];
    const int nout = kWidths[k + 1];
    T z[3];
    for (int i = 0; i < nout; ++i) {
      T acc = p.b[k][i];
      for (int j = 0; j < nin; ++j)
        acc += softplus(p.h[k][i * nin + j]) * v[j];
      z[i] = acc;
    }
    if (cache) {
      for (int j = 0; j < nin; ++j)
        cache->in[k][j] = v[j];
      for (int i = 0; i < nout; ++i)
        cache->pre[k][i] = z[i];
    }
    for (int i = 0; i < nout; ++i)
      v[i] = k + 1 < kLayers ? z[i] + std::tanh(p.a[k][i]) * std::tanh(z[i]) : z[i];
  }
  return v[0];
}

// Accumulates d(logit)/d(params) * upstream into g and returns d(logit)/dx * upstream.
template <typename T>
T logitBackward(const View<T>& p, const Cache<T>& cache, T upstream, GradView<T>* g)
{
  T dv[3] = {upstream, T(0), T(0)};
  for (int k = kLayers - 1; k >= 0; --k) {
    const int nin = kWidths[k];
    const int nout = kWidths[k + 1];
    T dz[3];
    for (int i = 0; i < nout; ++i) {
      if (k + 1 < kLayers) {
        const T tz = std::tanh(cache.pre[k][i]);
        const T ta = std::tanh(p.a[k][i]);
        dz[i] = dv[i] * (T(1) + ta * (T(1) - tz * tz));
        if (g)
          g->a[k][i] += dv[i] * tz * (T(1) - ta * ta);
      } else {
        dz[i] = dv[i];
      }
    }
    T dprev[3] = {T(0), T(0), T(0)};
    for (int i = 0; i < nout; ++i) {
      if (g)
        g->b[k][i] += dz[i];
      for (int j = 0; j < nin; ++j) {
        const T raw = p.h[k][i * nin + j];
        if (g)
          g->h[k][i * nin + j] += dz[i] * cache.in[k][j] * sigmoid(raw);
        dprev[j] += softplus(raw) * dz[i];
      }
    }
    for (int j = 0; j < 3; ++j)
      dv[j] = dprev[j];
  }
  return dv[0];
}

}  // namespace cdfnet
}  // namespace upcg
