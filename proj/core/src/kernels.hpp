#pragma once

// Inner loops shared by the convolution-like tape ops. A pair list maps
// each output row to (offset, input row) entries; weights are stored as
// [taps][cin][cout].

#include <cstdint>
#include <cstring>
#include <numeric>
#include <vector>

namespace upcg::kernels {

struct Pairs {
  int rows = 0;
  const int32_t* rowStart = nullptr;  // null: entry e = row i
  const int32_t* offset = nullptr;    // null: offset 0
  const int32_t* input = nullptr;     // null: input = row i
};

struct Csr {
  int rows = 0;
  std::vector<int32_t> rowStart;
  std::vector<int32_t> offset;
  std::vector<int32_t> input;

  Pairs view() const { return {rows, rowStart.data(), offset.data(), input.data()}; }
};

inline int32_t
entryBegin(const Pairs& p, int i)
{
  return p.rowStart ? p.rowStart[i] : i;
}

inline int32_t
entryEnd(const Pairs& p, int i)
{
  return p.rowStart ? p.rowStart[i + 1] : i + 1;
}

inline int32_t
entryOffset(const Pairs& p, int32_t e)
{
  return p.offset ? p.offset[e] : 0;
}

inline int32_t
entryInput(const Pairs& p, int i, int32_t e)
{
  return p.input ? p.input[e] : i;
}

// Same entries regrouped by input row.
inline Csr
transposePairs(const Pairs& p, int inputRows)
{
  Csr t;
  t.rows = inputRows;
  t.rowStart.assign(inputRows + 1, 0);
  for (int i = 0; i < p.rows; ++i)
    for (int32_t e = entryBegin(p, i); e < entryEnd(p, i); ++e)
      ++t.rowStart[entryInput(p, i, e) + 1];
  std::partial_sum(t.rowStart.begin(), t.rowStart.end(), t.rowStart.begin());
  const size_t n = size_t(t.rowStart.back());
  t.offset.resize(n);
  t.input.resize(n);
  std::vector<int32_t> fill(t.rowStart.begin(), t.rowStart.end() - 1);
  for (int i = 0; i < p.rows; ++i) {
    for (int32_t e = entryBegin(p, i); e < entryEnd(p, i); ++e) {
      const int32_t slot = fill[entryInput(p, i, e)]++;
      t.offset[slot] = entryOffset(p, e);
      t.input[slot] = i;
    }
  }
  return t;
}

// CO-wide vector of T. Unaligned loads and stores go through memcpy.
template <typename T, int CO>
struct Lane {
  typedef T V __attribute__((vector_size(CO * sizeof(T))));

  static V load(const T* p)
  {
    V v;
    std::memcpy(&v, p, sizeof(V));
    return v;
  }

  static void store(T* p, V v) { std::memcpy(p, &v, sizeof(V)); }
};

template <typename T, int CO>
void
gatherMultiplyFixed(T* __restrict out, const T* __restrict x, int cin, const T* __restrict w,
                    int taps, const Pairs& p, bool mirror)
{
  using L = Lane<T, CO>;
  using V = typename L::V;
  const size_t wStride = size_t(cin) * CO;
  for (int i = 0; i < p.rows; ++i) {
    V acc0 = {};
    V acc1 = {};
    for (int32_t e = entryBegin(p, i); e < entryEnd(p, i); ++e) {
      const int32_t o = mirror ? taps - 1 - entryOffset(p, e) : entryOffset(p, e);
      const T* xr = x + size_t(entryInput(p, i, e)) * cin;
      const T* wr = w + size_t(o) * wStride;
      int ci = 0;
      for (; ci + 1 < cin; ci += 2) {
        acc0 += xr[ci] * L::load(wr + size_t(ci) * CO);
        acc1 += xr[ci + 1] * L::load(wr + size_t(ci + 1) * CO);
      }
      if (ci < cin)
        acc0 += xr[ci] * L::load(wr + size_t(ci) * CO);
    }
    T* o = out + size_t(i) * CO;
    L::store(o, L::load(o) + (acc0 + acc1));
  }
}

template <typename T>
void
gatherMultiplyGeneric(T* out, int cout, const T* x, int cin, const T* w, int taps,
                      const Pairs& p, bool mirror)
{
  const size_t wStride = size_t(cin) * cout;
  std::vector<T> acc(cout);
  for (int i = 0; i < p.rows; ++i) {
    std::fill(acc.begin(), acc.end(), T(0));
    for (int32_t e = entryBegin(p, i); e < entryEnd(p, i); ++e) {
      const int32_t o = mirror ? taps - 1 - entryOffset(p, e) : entryOffset(p, e);
      const T* xr = x + size_t(entryInput(p, i, e)) * cin;
      const T* wr = w + size_t(o) * wStride;
      for (int ci = 0; ci < cin; ++ci) {
        const T xv = xr[ci];
        const T* wc = wr + size_t(ci) * cout;
        for (int co = 0; co < cout; ++co)
          acc[co] += xv * wc[co];
      }
    }
    T* o = out + size_t(i) * cout;
    for (int co = 0; co < cout; ++co)
      o[co] += acc[co];
  }
}

// out[i] += sum over entries e of row i: W[offset(e)]^T x[input(e)].
// With mirror set, offset o reads tap (taps - 1 - o).
template <typename T>
void
gatherMultiply(T* out, int cout, const T* x, int cin, const T* w, int taps, const Pairs& p,
               bool mirror = false)
{
  switch (cout) {
  case 1: return gatherMultiplyFixed<T, 1>(out, x, cin, w, taps, p, mirror);
  case 2: return gatherMultiplyFixed<T, 2>(out, x, cin, w, taps, p, mirror);
  case 4: return gatherMultiplyFixed<T, 4>(out, x, cin, w, taps, p, mirror);
  case 8: return gatherMultiplyFixed<T, 8>(out, x, cin, w, taps, p, mirror);
  case 16: return gatherMultiplyFixed<T, 16>(out, x, cin, w, taps, p, mirror);
  case 32: return gatherMultiplyFixed<T, 32>(out, x, cin, w, taps, p, mirror);
  default: return gatherMultiplyGeneric(out, cout, x, cin, w, taps, p, mirror);
  }
}

template <typename T, int CO>
void
outerAccumulateFixed(T* __restrict dw, const T* __restrict x, int cin, const T* __restrict g,
                     const Pairs& p)
{
  using L = Lane<T, CO>;
  using V = typename L::V;
  const size_t wStride = size_t(cin) * CO;
  for (int i = 0; i < p.rows; ++i) {
    const V gr = L::load(g + size_t(i) * CO);
    for (int32_t e = entryBegin(p, i); e < entryEnd(p, i); ++e) {
      const T* xr = x + size_t(entryInput(p, i, e)) * cin;
      T* wr = dw + size_t(entryOffset(p, e)) * wStride;
      for (int ci = 0; ci < cin; ++ci) {
        T* wc = wr + size_t(ci) * CO;
        L::store(wc, L::load(wc) + xr[ci] * gr);
      }
    }
  }
}

template <typename T>
void
outerAccumulateGeneric(T* dw, const T* x, int cin, const T* g, int cout, const Pairs& p)
{
  const size_t wStride = size_t(cin) * cout;
  for (int i = 0; i < p.rows; ++i) {
    const T* gr = g + size_t(i) * cout;
    for (int32_t e = entryBegin(p, i); e < entryEnd(p, i); ++e) {
      const T* xr = x + size_t(entryInput(p, i, e)) * cin;
      T* wr = dw + size_t(entryOffset(p, e)) * wStride;
      for (int ci = 0; ci < cin; ++ci) {
        const T xv = xr[ci];
        T* wc = wr + size_t(ci) * cout;
        for (int co = 0; co < cout; ++co)
          wc[co] += xv * gr[co];
      }
    }
  }
}

// dW[offset(e)] += x[input(e)] (outer) g[i] for every entry e of row i.
template <typename T>
void
outerAccumulate(T* dw, const T* x, int cin, const T* g, int cout, const Pairs& p)
{
  switch (cout) {
  case 1: return outerAccumulateFixed<T, 1>(dw, x, cin, g, p);
  case 2: return outerAccumulateFixed<T, 2>(dw, x, cin, g, p);
  case 4: return outerAccumulateFixed<T, 4>(dw, x, cin, g, p);
  case 8: return outerAccumulateFixed<T, 8>(dw, x, cin, g, p);
  case 16: return outerAccumulateFixed<T, 16>(dw, x, cin, g, p);
  case 32: return outerAccumulateFixed<T, 32>(dw, x, cin, g, p);
  default: return outerAccumulateGeneric(dw, x, cin, g, cout, p);
  }
}

// Per-tap transpose of [taps][cin][cout] into [taps][cout][cin].
template <typename T>
std::vector<T>
transposeTaps(const T* w, int taps, int cin, int cout)
{
  std::vector<T> t(size_t(taps) * cin * cout);
  for (int o = 0; o < taps; ++o)
    for (int ci = 0; ci < cin; ++ci)
      for (int co = 0; co < cout; ++co)
        t[(size_t(o) * cout + co) * cin + ci] = w[(size_t(o) * cin + ci) * cout + co];
  return t;
}

}  // namespace upcg::kernels
