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

#include "grcnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "grcnn/error.hpp"

namespace grcnn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), values_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.size()) {
    throw ContractError("tensor of shape " + shape_.str() + " needs " +
                        std::to_string(shape_.size()) + " values, got " +
                        std::to_string(values_.size()));
  }
}

Tensor Tensor::slice(std::size_t first, std::size_t count) const {
  if (first + count > shape_.n) {
    throw ContractError("slice [" + std::to_string(first) + "," + std::to_string(first + count) +
                        ") exceeds batch " + std::to_string(shape_.n));
  }
  Shape s = shape_;
  s.n = count;
  const auto stride = shape_.sample();
  std::vector<double> v(values_.begin() + static_cast<std::ptrdiff_t>(first * stride),
                        values_.begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
  return Tensor(s, std::move(v));
}

std::vector<double>& Tensor::ensure_grad() {
  if (!grad_) grad_.emplace(values_.size(), 0.0);
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw ContractError("tensor has no gradient buffer");
  return *grad_;
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  s.n = 0;
  for (const auto& p : parts) {
    const auto& ps = p.shape();
    if (ps.c != s.c || ps.h != s.h || ps.w != s.w) {
      throw ContractError("concat_batch: shape " + ps.str() + " incompatible with " + s.str());
    }
    s.n += ps.n;
  }
  std::vector<double> v;
  v.reserve(s.size());
  for (const auto& p : parts) v.insert(v.end(), p.storage().begin(), p.storage().end());
  return Tensor(s, std::move(v));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace grcnn
