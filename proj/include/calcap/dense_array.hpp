/*
   Copyright 2026 calcap authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace calcap {

/// Dense row-major array of 64-bit reals. Rank 1 (vectors) and rank 2
/// (matrices) are the only shapes the project uses.
struct DenseArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  DenseArray() = default;

  static DenseArray zeros(std::vector<std::size_t> shape) {
    DenseArray a;
    a.shape = std::move(shape);
    a.data.assign(a.shape_numel(), 0.0);
    return a;
  }

  static DenseArray vector(std::vector<double> values) {
    DenseArray a;
    a.shape = {values.size()};
    a.data = std::move(values);
    return a;
  }

  static DenseArray scalar(double v) { return vector({v}); }

  static DenseArray matrix(std::size_t rows, std::size_t cols,
                           std::vector<double> values) {
    if (values.size() != rows * cols)
      throw std::invalid_argument("DenseArray::matrix: size mismatch");
    DenseArray a;
    a.shape = {rows, cols};
    a.data = std::move(values);
    return a;
  }

  std::size_t shape_numel() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool same_shape(const DenseArray& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Shape/length consistency plus the no-NaN/Inf invariant.
  void validate(const std::string& what) const {
    if (shape_numel() != data.size())
      throw std::invalid_argument(what + ": shape does not match data length");
    if (!all_finite())
      throw std::invalid_argument(what + ": non-finite value");
  }
};

inline std::string shape_string(const DenseArray& a) {
  std::string s = "(";
  for (std::size_t i = 0; i < a.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(a.shape[i]);
  }
  return s + ")";
}

}  // namespace calcap
