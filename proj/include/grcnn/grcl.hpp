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

// Gated recurrent convolutional layer:
//
//   x_0 = A_0(u)
//   g_t = B_t(x_{t-1}) + C(u)                      t = 1..T
//   x_t = x_{t-1} + sigmoid(g_t) * A_t(x_{t-1})    t = 1..T
//
// A_0 and A_t are conv -> batch norm -> ReLU. B_t and C are conv -> batch norm
// without ReLU since the sigmoid follows directly. C(u) is evaluated once and
// shared by every step.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "grcnn/kernels.hpp"
#include "grcnn/random.hpp"
#include "grcnn/tensor.hpp"

namespace grcnn {

struct Conv {
  ConvSpec spec;
  Tensor weight;
  std::vector<double> bias;  // empty: no bias term
};

/// conv -> batch norm -> optional ReLU.
struct ConvBlock {
  Conv conv;
  BatchNormState bn;
  bool relu = true;
};

/// Recurrent operator body: one conv weight set when tied (else one per
/// step) and one batch-norm state per step.
struct RecurrentBranch {
  std::vector<Conv> convs;
  std::vector<BatchNormState> norms;
  bool relu = true;

  [[nodiscard]] const Conv& conv_at(std::size_t step) const {
    return convs.size() == 1 ? convs.front() : convs.at(step);
  }
  Conv& conv_at(std::size_t step) { return convs.size() == 1 ? convs.front() : convs.at(step); }
};

struct GrclParams {
  std::size_t steps = 3;
  bool tie_weights = true;
  ConvBlock a0;
  ConvBlock c_gate;
  RecurrentBranch a_rec;
  RecurrentBranch b_rec;

  [[nodiscard]] std::size_t in_channels() const { return a0.conv.spec.in_channels; }
  [[nodiscard]] std::size_t channels() const { return a0.conv.spec.out_channels; }
  /// Throws ContractError on any structural inconsistency.
  void validate() const;
};

struct GrclShape {
  std::size_t in_channels = 0;
  std::size_t channels = 0;
  std::size_t steps = 3;
  bool tie_weights = true;
  std::size_t feed_kernel = 3;  // A_0
  std::size_t rec_kernel = 3;   // A_t
  std::size_t gate_kernel = 1;  // B_t and C
};

enum class GateMode {
  learned,           // sigmoid(g_t)
  ablated,           // multiplier 1, gate branch skipped (plain residual chain)
  saturated_open,    // sigmoid output forced to 1
  saturated_closed,  // sigmoid output forced to 0
};

GateMode parse_gate_mode(const std::string& name);
std::string to_string(GateMode mode);

/// He-normal conv weights (std sqrt(2 / fan_in)), no conv biases, fresh batch
/// norms. Gate batch-norm beta starts at 0 so gates open at sigmoid(0) = 0.5.
GrclParams make_grcl(const GrclShape& shape, Rng& rng);
void he_init(Conv& conv, Rng& rng);
Conv make_conv(const ConvSpec& spec, bool with_bias);

struct ConvBlockCache {
  ConvCache conv;
  BatchNormCache bn;
  Tensor output;
  bool relu = true;
};

struct ConvBlockResult {
  Tensor output;
  BatchNormState state;
};

ConvBlockResult conv_block_forward(const Conv& conv, const BatchNormState& bn, bool relu,
                                   const Tensor& x, Phase phase, ConvBlockCache* cache);
inline ConvBlockResult conv_block_forward(const ConvBlock& block, const Tensor& x, Phase phase,
                                          ConvBlockCache* cache = nullptr) {
  return conv_block_forward(block.conv, block.bn, block.relu, x, phase, cache);
}

struct ConvBlockGrads {
  Tensor d_input;
  Tensor d_weight;
  std::vector<double> d_bias;
  std::vector<double> d_gamma;
  std::vector<double> d_beta;
};

ConvBlockGrads conv_block_backward(const ConvBlockCache& cache, const Tensor& d_output);

struct GrclStepCache {
  ConvBlockCache a;
  ConvBlockCache b;      // empty unless the gate branch ran
  Tensor gate;           // multiplier applied to A_t(x_{t-1}); empty in ablated mode
};

struct GrclCache {
  GateMode mode = GateMode::learned;
  Phase phase = Phase::train;
  Shape input_shape;
  ConvBlockCache a0;
  ConvBlockCache c_gate;
  std::vector<GrclStepCache> steps;
  /// Running statistics after the call, ordered as in for_each_batch_norm.
  std::vector<BatchNormState> updated_stats;
};

struct GrclResult {
  Tensor output;
  GrclCache cache;
};

GrclResult grcl_forward(const Tensor& u, const GrclParams& params, GateMode mode, Phase phase);

struct GrclGrads {
  Tensor d_input;
  GrclParams params;  // same layout as the forward parameters, holding gradients
};

/// Exact reverse-mode gradients of grcl_forward, including the sigmoid path
/// through every gate and the summed C(u) contribution.
GrclGrads grcl_backward(const GrclParams& params, const GrclCache& cache, const Tensor& d_output);

/// Copy of `params` with every weight, bias and batch-norm affine parameter
/// zeroed (running statistics zeroed as well).
GrclParams zeros_like(const GrclParams& params);

/// Visits batch-norm states in canonical order: a0, c_gate, a_rec[0..T),
/// b_rec[0..T).
template <class Params, class Fn>
void for_each_batch_norm(Params& params, Fn&& fn) {
  fn(params.a0.bn);
  fn(params.c_gate.bn);
  for (auto& bn : params.a_rec.norms) fn(bn);
  for (auto& bn : params.b_rec.norms) fn(bn);
}

void apply_running_stats(GrclParams& params, const std::vector<BatchNormState>& stats);

}  // namespace grcnn
