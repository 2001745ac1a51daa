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

// Dense forward/backward kernels. Every function here is pure: outputs depend
// only on arguments, and batch-norm running statistics are returned as a new
// state value instead of being updated in place.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "grcnn/tensor.hpp"

namespace grcnn {

enum class Phase { train, eval };

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kh = 1, kw = 1;
  std::size_t sh = 1, sw = 1;
  std::size_t ph = 0, pw = 0;

  /// floor((H + 2ph - kh) / sh) + 1, analogously for width. Throws when the
  /// result would be < 1.
  [[nodiscard]] std::pair<std::size_t, std::size_t> output_hw(std::size_t h, std::size_t w) const;
  [[nodiscard]] Shape weight_shape() const { return {out_channels, in_channels, kh, kw}; }
  [[nodiscard]] std::size_t fan_in() const { return in_channels * kh * kw; }

  /// Stride-1 "same" convolution with a square kernel.
  static ConvSpec same(std::size_t in, std::size_t out, std::size_t k) {
    return {in, out, k, k, 1, 1, k / 2, k / 2};
  }
};

struct ConvCache {
  ConvSpec spec;
  Tensor input;
  Tensor weights;
  bool has_bias = false;
};

struct ConvGrads {
  Tensor d_input;
  Tensor d_weights;
  std::vector<double> d_bias;  // empty when the convolution had no bias
};

/// Zero-padded cross-correlation. `bias` may be empty (no bias term).
Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const double> bias,
              const ConvSpec& spec);
Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const double> bias,
              const ConvSpec& spec, ConvCache& cache);
ConvGrads conv2d_backward(const ConvCache& cache, const Tensor& d_output);

struct BatchNormState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  /// gamma = 1, beta = 0, running mean 0, running variance 1.
  static BatchNormState fresh(std::size_t channels);
  [[nodiscard]] std::size_t channels() const { return gamma.size(); }
  void validate(std::size_t channels) const;
};

struct BatchNormCache {
  Phase phase = Phase::train;
  Shape shape;
  std::vector<double> normalized;  // x-hat, same layout as the input
  std::vector<double> inv_std;     // per channel
  std::vector<double> gamma;
};

struct BatchNormResult {
  Tensor output;
  BatchNormState state;  // running statistics after this call
};

struct BatchNormGrads {
  Tensor d_input;
  std::vector<double> d_gamma;
  std::vector<double> d_beta;
};

/// Train mode normalizes with biased batch statistics and blends them into
/// the running statistics with `momentum`; eval mode uses the running values.
BatchNormResult batch_norm(const Tensor& input, const BatchNormState& state, Phase phase);
BatchNormResult batch_norm(const Tensor& input, const BatchNormState& state, Phase phase,
                           BatchNormCache& cache);
BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& d_output);

enum class Activation { relu, sigmoid };

Tensor activation(const Tensor& input, Activation kind);
/// Pointwise derivative expressed through the forward *output*:
/// relu' = [y > 0], sigmoid' = y (1 - y).
Tensor activation_backward(const Tensor& forward_output, const Tensor& d_output,
                           Activation kind);
double sigmoid(double x);

Tensor hadamard(const Tensor& a, const Tensor& b);
/// Returns (d_a, d_b) = (d * b, d * a).
std::pair<Tensor, Tensor> hadamard_backward(const Tensor& a, const Tensor& b, const Tensor& d);

/// Elementwise a + b.
Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& acc, const Tensor& b);

/// Affine map on per-sample flattened input. `weights` has shape
/// (out_features, in_features, 1, 1); output is (N, out_features, 1, 1).
Tensor linear(const Tensor& input, const Tensor& weights, std::span<const double> bias);

struct LinearGrads {
  Tensor d_input;
  Tensor d_weights;
  std::vector<double> d_bias;
};

LinearGrads linear_backward(const Tensor& input, const Tensor& weights, const Tensor& d_output);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& d_output);

/// Row-wise softmax over the flattened per-sample features.
Tensor softmax(const Tensor& logits);
/// Vector-Jacobian product of softmax: p * (d - <p, d>) per row.
Tensor softmax_backward(const Tensor& probs, const Tensor& d_probs);

struct LossResult {
  double loss = 0.0;
  Tensor d_logits;
};

/// Mean over the batch of -sum y log softmax(z). Label rows must be
/// non-negative and sum to 1 within 1e-9.
LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& soft_labels);

/// Throws ContractError naming the first row that is not a distribution.
void validate_distribution_rows(const Tensor& rows, const char* what);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(p + eps e_i) - f(p - eps e_i)) / (2 eps) for every
/// coordinate. Throws NumericError on a non-finite evaluation.
std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> params, double eps);
/// Same, restricted to the listed coordinates (result aligned with `coords`).
std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> params, double eps,
                                               std::span<const std::size_t> coords);

}  // namespace grcnn
