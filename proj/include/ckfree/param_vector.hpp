// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ckfree/errors.hpp"

namespace ckfree {

/// Flat weight storage with shape metadata; the unit a recovery operates on.
/// The shape is fixed at construction, value length always equals its product.
class ParameterVector {
 public:
  ParameterVector() = default;

  ParameterVector(std::vector<double> values, std::vector<std::size_t> shape)
      : values_(std::move(values)), shape_(std::move(shape)) {
    if (values_.size() != shape_product(shape_))
      throw ConfigError("parameter vector: value count " + std::to_string(values_.size()) +
                        " does not match shape product " + std::to_string(shape_product(shape_)));
  }

  static ParameterVector zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_product(shape);
    return ParameterVector(std::vector<double>(n, 0.0), std::move(shape));
  }

  const std::vector<double>& values() const { return values_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double* ptr() { return values_.data(); }
  const double* ptr() const { return values_.data(); }

  bool same_shape(const ParameterVector& other) const { return shape_ == other.shape_; }

  void check_finite(const char* what) const {
    for (double v : values_)
      if (!std::isfinite(v)) throw NumericDivergenceError(std::string(what) + ": non-finite parameter value");
  }

  static std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<double> values_;
  std::vector<std::size_t> shape_;
};

}  // namespace ckfree
