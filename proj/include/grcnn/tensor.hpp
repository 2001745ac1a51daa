// Copyright 2026 The GRCNN Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace grcnn {

/// (N, C, H, W) extents of a dense 4-D array.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  [[nodiscard]] constexpr std::size_t size() const { return n * c * h * w; }
  [[nodiscard]] constexpr std::size_t plane() const { return h * w; }
  [[nodiscard]] constexpr std::size_t sample() const { return c * h * w; }
  [[nodiscard]] std::string str() const;

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

/// Dense row-major (N, C, H, W) array of doubles with an optional gradient
/// buffer of the same shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] bool empty() const { return values_.empty(); }

  [[nodiscard]] std::span<double> values() { return values_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] double* data() { return values_.data(); }
  [[nodiscard]] const double* data() const { return values_.data(); }
  [[nodiscard]] std::vector<double>& storage() { return values_; }
  [[nodiscard]] const std::vector<double>& storage() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return values_[offset(n, c, h, w)];
  }
  [[nodiscard]] double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return values_[offset(n, c, h, w)];
  }
  [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t h,
                                   std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  /// Samples [first, first + count) as a new tensor.
  [[nodiscard]] Tensor slice(std::size_t first, std::size_t count) const;

  [[nodiscard]] bool has_grad() const { return grad_.has_value(); }
  std::vector<double>& ensure_grad();
  [[nodiscard]] std::span<const double> grad() const;
  void clear_grad() { grad_.reset(); }

  [[nodiscard]] bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> values_;
  std::optional<std::vector<double>> grad_;
};

/// Concatenates along the batch axis; all inputs must share (C, H, W).
Tensor concat_batch(std::span<const Tensor> parts);

/// Bitwise equality of shape and values (distinguishes -0.0 from +0.0).
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace grcnn
