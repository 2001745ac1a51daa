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

#include "grcnn/grcl.hpp"

#include <cmath>

#include "grcnn/error.hpp"

namespace grcnn {
namespace {

void add_to(std::vector<double>& acc, const std::vector<double>& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

void add_to(Tensor& acc, const Tensor& v) { add_inplace(acc, v); }

void zero(Conv& conv) {
  conv.weight = Tensor(conv.weight.shape());
  conv.bias.assign(conv.bias.size(), 0.0);
}

void zero(BatchNormState& bn) {
  for (auto* v : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var}) {
    v->assign(v->size(), 0.0);
  }
}

void accumulate(Conv& conv_grad, BatchNormState& bn_grad, const ConvBlockGrads& g) {
  add_to(conv_grad.weight, g.d_weight);
  if (!conv_grad.bias.empty()) add_to(conv_grad.bias, g.d_bias);
  add_to(bn_grad.gamma, g.d_gamma);
  add_to(bn_grad.beta, g.d_beta);
}

void check_step_shape(const Tensor& got, const Shape& want, std::size_t step, const char* what) {
  if (got.shape() != want) {
    throw ContractError("grcl step " + std::to_string(step) + ": " + what + " produced shape " +
                        got.shape().str() + ", expected " + want.str());
  }
}

}  // namespace

GateMode parse_gate_mode(const std::string& name) {
  if (name == "learned") return GateMode::learned;
  if (name == "ablated") return GateMode::ablated;
  if (name == "saturated_open") return GateMode::saturated_open;
  if (name == "saturated_closed") return GateMode::saturated_closed;
  throw ConfigError("unknown gate mode '" + name + "'");
}

std::string to_string(GateMode mode) {
  switch (mode) {
    case GateMode::learned: return "learned";
    case GateMode::ablated: return "ablated";
    case GateMode::saturated_open: return "saturated_open";
    case GateMode::saturated_closed: return "saturated_closed";
  }
  return "unknown";
}

Conv make_conv(const ConvSpec& spec, bool with_bias) {
  Conv c{spec, Tensor(spec.weight_shape()), {}};
  if (with_bias) c.bias.assign(spec.out_channels, 0.0);
  return c;
}

void he_init(Conv& conv, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(conv.spec.fan_in())));
  for (auto& w : conv.weight.values()) w = dist(rng);
  conv.bias.assign(conv.bias.size(), 0.0);
}

void GrclParams::validate() const {
  const std::size_t ch = channels();
  if (c_gate.conv.spec.in_channels != in_channels() || c_gate.conv.spec.out_channels != ch) {
    throw ContractError("grcl: gate operator C must map input channels to block channels");
  }
  for (const auto* branch : {&a_rec, &b_rec}) {
    const std::size_t want_convs = tie_weights ? 1 : steps;
    if (steps > 0 && branch->convs.size() != want_convs) {
      throw ContractError("grcl: recurrent branch holds " + std::to_string(branch->convs.size()) +
                          " weight sets, expected " + std::to_string(want_convs));
    }
    if (branch->norms.size() != steps) {
      throw ContractError("grcl: recurrent branch holds " + std::to_string(branch->norms.size()) +
                          " batch norms for T = " + std::to_string(steps));
    }
    for (const auto& conv : branch->convs) {
      const auto& s = conv.spec;
      if (s.in_channels != ch || s.out_channels != ch || s.sh != 1 || s.sw != 1 ||
          s.ph != s.kh / 2 || s.pw != s.kw / 2 || s.kh % 2 == 0 || s.kw % 2 == 0) {
        throw ContractError("grcl: recurrent convolutions must preserve channels and shape");
      }
    }
  }
}

GrclParams make_grcl(const GrclShape& shape, Rng& rng) {
  GrclParams p;
  p.steps = shape.steps;
  p.tie_weights = shape.tie_weights;
  p.a0 = {make_conv(ConvSpec::same(shape.in_channels, shape.channels, shape.feed_kernel), false),
          BatchNormState::fresh(shape.channels), true};
  he_init(p.a0.conv, rng);
  p.c_gate = {make_conv(ConvSpec::same(shape.in_channels, shape.channels, shape.gate_kernel), false),
              BatchNormState::fresh(shape.channels), false};
  he_init(p.c_gate.conv, rng);

  const std::size_t sets = shape.steps == 0 ? 0 : (shape.tie_weights ? 1 : shape.steps);
  p.a_rec.relu = true;
  p.b_rec.relu = false;
  for (std::size_t i = 0; i < sets; ++i) {
    p.a_rec.convs.push_back(
        make_conv(ConvSpec::same(shape.channels, shape.channels, shape.rec_kernel), false));
    he_init(p.a_rec.convs.back(), rng);
    p.b_rec.convs.push_back(
        make_conv(ConvSpec::same(shape.channels, shape.channels, shape.gate_kernel), false));
    he_init(p.b_rec.convs.back(), rng);
  }
  p.a_rec.norms.assign(shape.steps, BatchNormState::fresh(shape.channels));
  p.b_rec.norms.assign(shape.steps, BatchNormState::fresh(shape.channels));
  return p;
}

ConvBlockResult conv_block_forward(const Conv& conv, const BatchNormState& bn, bool relu,
                                   const Tensor& x, Phase phase, ConvBlockCache* cache) {
  ConvBlockResult r;
  if (cache) {
    const Tensor z = conv2d(x, conv.weight, conv.bias, conv.spec, cache->conv);
    auto normed = batch_norm(z, bn, phase, cache->bn);
    r.state = std::move(normed.state);
    r.output = relu ? activation(normed.output, Activation::relu) : std::move(normed.output);
    cache->output = r.output;
    cache->relu = relu;
  } else {
    const Tensor z = conv2d(x, conv.weight, conv.bias, conv.spec);
    auto normed = batch_norm(z, bn, phase);
    r.state = std::move(normed.state);
    r.output = relu ? activation(normed.output, Activation::relu) : std::move(normed.output);
  }
  return r;
}

ConvBlockGrads conv_block_backward(const ConvBlockCache& cache, const Tensor& d_output) {
  const Tensor d_norm =
      cache.relu ? activation_backward(cache.output, d_output, Activation::relu) : d_output;
  auto bn = batch_norm_backward(cache.bn, d_norm);
  auto conv = conv2d_backward(cache.conv, bn.d_input);
  return {std::move(conv.d_input), std::move(conv.d_weights), std::move(conv.d_bias),
          std::move(bn.d_gamma), std::move(bn.d_beta)};
}

GrclResult grcl_forward(const Tensor& u, const GrclParams& params, GateMode mode, Phase phase) {
  params.validate();
  if (u.shape().c != params.in_channels()) {
    throw ContractError("grcl step 0: input has " + std::to_string(u.shape().c) +
                        " channels, block expects " + std::to_string(params.in_channels()));
  }
  GrclResult r;
  auto& cache = r.cache;
  cache.mode = mode;
  cache.phase = phase;
  cache.input_shape = u.shape();
  cache.steps.resize(params.steps);

  std::vector<BatchNormState> a_stats(params.a_rec.norms);
  std::vector<BatchNormState> b_stats(params.b_rec.norms);
  BatchNormState c_stats = params.c_gate.bn;

  auto x0 = conv_block_forward(params.a0, u, phase, &cache.a0);
  Tensor x = std::move(x0.output);
  const Shape state_shape = x.shape();

  const bool gate_branch = mode != GateMode::ablated;
  Tensor cu;
  if (gate_branch && params.steps > 0) {
    auto c = conv_block_forward(params.c_gate, u, phase, &cache.c_gate);
    check_step_shape(c.output, state_shape, 0, "gate operator C");
    cu = std::move(c.output);
    c_stats = std::move(c.state);
  }

  for (std::size_t t = 0; t < params.steps; ++t) {
    auto& step = cache.steps[t];
    auto a = conv_block_forward(params.a_rec.conv_at(t), params.a_rec.norms[t], params.a_rec.relu,
                                x, phase, &step.a);
    check_step_shape(a.output, state_shape, t + 1, "recurrent operator A_t");
    a_stats[t] = std::move(a.state);

    if (mode == GateMode::ablated) {
      x = add(x, a.output);
      continue;
    }

    auto b = conv_block_forward(params.b_rec.conv_at(t), params.b_rec.norms[t], params.b_rec.relu,
                                x, phase, &step.b);
    check_step_shape(b.output, state_shape, t + 1, "gate operator B_t");
    b_stats[t] = std::move(b.state);

    switch (mode) {
      case GateMode::learned:
        step.gate = activation(add(b.output, cu), Activation::sigmoid);
        break;
      case GateMode::saturated_open:
        step.gate = Tensor(state_shape, 1.0);
        break;
      case GateMode::saturated_closed:
        step.gate = Tensor(state_shape, 0.0);
        break;
      case GateMode::ablated:
        break;
    }
    x = add(x, hadamard(step.gate, a.output));
  }

  cache.updated_stats.push_back(x0.state);
  cache.updated_stats.push_back(c_stats);
  for (auto& s : a_stats) cache.updated_stats.push_back(std::move(s));
  for (auto& s : b_stats) cache.updated_stats.push_back(std::move(s));
  r.output = std::move(x);
  return r;
}

GrclParams zeros_like(const GrclParams& params) {
  GrclParams z = params;
  zero(z.a0.conv);
  zero(z.c_gate.conv);
  for (auto* branch : {&z.a_rec, &z.b_rec}) {
    for (auto& conv : branch->convs) zero(conv);
  }
  for_each_batch_norm(z, [](BatchNormState& bn) { zero(bn); });
  return z;
}

GrclGrads grcl_backward(const GrclParams& params, const GrclCache& cache, const Tensor& d_output) {
  if (cache.steps.size() != params.steps) {
    throw ContractError("grcl_backward: cache holds " + std::to_string(cache.steps.size()) +
                        " steps, parameters have T = " + std::to_string(params.steps));
  }
  if (d_output.shape() != cache.a0.output.shape()) {
    throw ContractError("grcl_backward: d_output shape " + d_output.shape().str() +
                        " != block output shape " + cache.a0.output.shape().str());
  }
  GrclGrads g{Tensor(cache.input_shape), zeros_like(params)};
  auto& dp = g.params;

  const bool learned = cache.mode == GateMode::learned;
  Tensor dx = d_output;
  Tensor d_cu(d_output.shape());

  for (std::size_t t = params.steps; t-- > 0;) {
    const auto& step = cache.steps[t];
    // x_t = x_{t-1} + gate * a; the identity path keeps dx as is.
    const Tensor d_a = cache.mode == GateMode::ablated ? dx : hadamard(dx, step.gate);
    Tensor d_prev = dx;

    if (learned) {
      const Tensor d_gate = hadamard(dx, step.a.output);
      const Tensor d_g = activation_backward(step.gate, d_gate, Activation::sigmoid);
      add_inplace(d_cu, d_g);
      const auto bg = conv_block_backward(step.b, d_g);
      accumulate(dp.b_rec.conv_at(t), dp.b_rec.norms[t], bg);
      add_inplace(d_prev, bg.d_input);
    }

    const auto ag = conv_block_backward(step.a, d_a);
    accumulate(dp.a_rec.conv_at(t), dp.a_rec.norms[t], ag);
    add_inplace(d_prev, ag.d_input);
    dx = std::move(d_prev);
  }

  const auto a0g = conv_block_backward(cache.a0, dx);
  accumulate(dp.a0.conv, dp.a0.bn, a0g);
  g.d_input = a0g.d_input;

  if (learned && params.steps > 0) {
    const auto cg = conv_block_backward(cache.c_gate, d_cu);
    accumulate(dp.c_gate.conv, dp.c_gate.bn, cg);
    add_inplace(g.d_input, cg.d_input);
  }
  return g;
}

void apply_running_stats(GrclParams& params, const std::vector<BatchNormState>& stats) {
  std::size_t i = 0;
  for_each_batch_norm(params, [&](BatchNormState& bn) {
    if (i >= stats.size()) throw ContractError("apply_running_stats: too few states");
    bn.running_mean = stats[i].running_mean;
    bn.running_var = stats[i].running_var;
    ++i;
  });
}

}  // namespace grcnn
