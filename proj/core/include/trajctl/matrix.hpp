#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "trajctl/errors.hpp"

namespace trajctl {

// Dense row-major matrix. Desk-scale sequences only, so plain loops are fine.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0))
      : rows(r), cols(c), data(r * c, fill) {}

  T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  T* row(std::size_t r) { return data.data() + r * cols; }
  const T* row(std::size_t r) const { return data.data() + r * cols; }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

using Mat = Matrix<double>;
using MatF = Matrix<float>;

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows) {
    throw Error(ErrorCode::ShapeMismatch, "matmul: inner dimensions differ");
  }
  Matrix<T> out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* arow = a.row(i);
    T* orow = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const T aik = arow[k];
      const T* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename T>
Matrix<float> to_float(const Matrix<T>& m) {
  Matrix<float> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    out.data[i] = static_cast<float>(m.data[i]);
  }
  return out;
}

inline Mat to_double(const MatF& m) {
  Mat out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    out.data[i] = static_cast<double>(m.data[i]);
  }
  return out;
}

}  // namespace trajctl
