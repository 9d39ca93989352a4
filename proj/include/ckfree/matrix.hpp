// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace ckfree {

/// Dense row-major matrix of doubles. Rows index samples throughout.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  /// Copy of rows [first, first+count).
  Matrix row_slice(std::size_t first, std::size_t count) const {
    Matrix out(count, cols);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = at(first + i, j);
    return out;
  }
};

}  // namespace ckfree
