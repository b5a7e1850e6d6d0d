#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace upcg {

// Dense row-major matrix. Rows index points, columns index channels.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c, T fill = T(0))
    : rows(r), cols(c), data(size_t(r) * size_t(c), fill)
  {}

  T* row(int r) { return data.data() + size_t(r) * size_t(cols); }
  const T* row(int r) const { return data.data() + size_t(r) * size_t(cols); }

  T& operator()(int r, int c) { return data[size_t(r) * size_t(cols) + c]; }
  T operator()(int r, int c) const { return data[size_t(r) * size_t(cols) + c]; }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  void setZero() { std::fill(data.begin(), data.end(), T(0)); }

  template <typename U>
  Mat<U> cast() const
  {
    Mat<U> out(rows, cols);
    for (size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace upcg
