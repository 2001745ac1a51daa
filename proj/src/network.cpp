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

#include "grcnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "grcnn/error.hpp"

namespace grcnn {

// ------------------------------------------------------------------ config

GrcnnConfig GrcnnConfig::paper() {
  GrcnnConfig c;
  c.preset = "paper";
  c.stem_channels[0] = 64;
  c.stem_channels[1] = 64;
  c.blocks = {{64, 3, false}, {128, 3, true}, {256, 3, true}, {512, 3, true}};
  c.num_classes = 1000;
  return c;
}

GrcnnConfig GrcnnConfig::tiny() {
  GrcnnConfig c;
  c.preset = "tiny";
  c.stem_channels[0] = 8;
  c.stem_channels[1] = 8;
  c.blocks = {{8, 3, false}, {16, 3, true}, {32, 3, true}, {64, 3, true}};
  c.num_classes = 10;
  return c;
}

GrcnnConfig GrcnnConfig::from_preset(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "tiny") return tiny();
  throw ConfigError("unknown preset '" + name + "' (expected paper or tiny)");
}

void GrcnnConfig::validate() const {
  if (input_channels == 0 || stem_channels[0] == 0 || stem_channels[1] == 0) {
    throw ContractError("grcnn config: channel counts must be positive");
  }
  if (blocks.empty()) throw ContractError("grcnn config: at least one GRCL block required");
  if (num_classes == 0) throw ContractError("grcnn config: num_classes must be positive");
  for (auto k : {feed_kernel, rec_kernel, gate_kernel}) {
    if (k % 2 == 0) throw ContractError("grcnn config: kernel sizes must be odd");
  }
  std::size_t channels = stem_channels[1];
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.channels == 0) throw ContractError("grcnn config: block " + std::to_string(i + 1) + " has zero channels");
    if (b.channels != channels && !b.downsample) {
      throw ContractError("grcnn config: block " + std::to_string(i + 1) + " expects " +
                          std::to_string(b.channels) + " channels but receives " +
                          std::to_string(channels) + " without a projection");
    }
    channels = b.channels;
  }
}

// ------------------------------------------------------------------ network

std::string grcl_group(std::size_t index) { return "grcl" + std::to_string(index); }

std::vector<std::string> Network::groups() const {
  std::vector<std::string> g;
  for (const auto& l : layers) g.push_back(l.name);
  g.emplace_back("readout");
  return g;
}

bool Network::is_frozen(std::string_view param_name) const {
  const auto dot = param_name.find('.');
  return group_frozen(param_name.substr(0, dot));
}

std::size_t Network::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  throw ContractError("network has no layer named '" + std::string(name) + "'");
}

const GrclParams& Network::grcl(std::size_t index) const {
  return std::get<GrclParams>(layers.at(layer_index(grcl_group(index))).body);
}

namespace {

ConvBlock make_block(const ConvSpec& spec, bool relu, Rng& rng) {
  ConvBlock b{make_conv(spec, false), BatchNormState::fresh(spec.out_channels), relu};
  he_init(b.conv, rng);
  return b;
}

}  // namespace

Network build_grcnn(const GrcnnConfig& config, Rng& rng) {
  config.validate();
  Network net;
  net.config = config;
  net.layers.push_back(
      {"stem1", make_block({config.input_channels, config.stem_channels[0], 3, 3, 1, 1, 1, 1}, true, rng)});
  net.layers.push_back(
      {"stem2", make_block({config.stem_channels[0], config.stem_channels[1], 3, 3, 2, 2, 1, 1}, true, rng)});
  std::size_t channels = config.stem_channels[1];
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const auto& b = config.blocks[i];
    if (b.downsample) {
      net.layers.push_back({"down" + std::to_string(i + 1),
                            make_block({channels, b.channels, 1, 1, 2, 2, 0, 0}, true, rng)});
    }
    GrclShape shape{b.channels, b.channels, b.steps, config.tie_weights,
                    config.feed_kernel, config.rec_kernel, config.gate_kernel};
    net.layers.push_back({grcl_group(i + 1), make_grcl(shape, rng)});
    channels = b.channels;
  }
  net.readout.weight = Tensor({config.num_classes, channels, 1, 1});
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(channels)));
  for (auto& w : net.readout.weight.values()) w = dist(rng);
  net.readout.bias.assign(config.num_classes, 0.0);
  return net;
}

Network freeze(Network net, const std::set<std::string>& trainable) {
  const auto groups = net.groups();
  for (const auto& name : trainable) {
    if (std::find(groups.begin(), groups.end(), name) == groups.end()) {
      throw ContractError("freeze: unknown layer group '" + name + "'");
    }
  }
  net.frozen.clear();
  for (const auto& g : groups) {
    if (!trainable.contains(g)) net.frozen.insert(g);
  }
  return net;
}

// ------------------------------------------------------------ param slots

namespace {

template <class Slot>
struct SlotCollector {
  std::vector<Slot> out;
  bool include_buffers = false;

  void push(std::string name, auto& vec, std::vector<std::size_t> dims, bool buffer) {
    out.push_back(Slot{std::move(name), std::span(vec), std::move(dims), buffer});
  }
  void conv(const std::string& prefix, auto& c) {
    const auto s = c.weight.shape();
    push(prefix + ".weight", c.weight.storage(), {s.n, s.c, s.h, s.w}, false);
    if (!c.bias.empty()) push(prefix + ".bias", c.bias, {c.bias.size()}, false);
  }
  void norm(const std::string& prefix, auto& bn) {
    push(prefix + ".gamma", bn.gamma, {bn.gamma.size()}, false);
    push(prefix + ".beta", bn.beta, {bn.beta.size()}, false);
    if (include_buffers) {
      push(prefix + ".running_mean", bn.running_mean, {bn.running_mean.size()}, true);
      push(prefix + ".running_var", bn.running_var, {bn.running_var.size()}, true);
    }
  }
  void block(const std::string& prefix, auto& b) {
    conv(prefix + ".conv", b.conv);
    norm(prefix + ".bn", b.bn);
  }
  void branch(const std::string& prefix, auto& r) {
    if (r.convs.size() == 1) {
      conv(prefix + ".conv", r.convs.front());
    } else {
      for (std::size_t t = 0; t < r.convs.size(); ++t) conv(prefix + ".conv" + std::to_string(t), r.convs[t]);
    }
    for (std::size_t t = 0; t < r.norms.size(); ++t) norm(prefix + ".bn" + std::to_string(t), r.norms[t]);
  }
  void grcl(const std::string& prefix, auto& g) {
    block(prefix + ".a0", g.a0);
    block(prefix + ".c_gate", g.c_gate);
    branch(prefix + ".a_rec", g.a_rec);
    branch(prefix + ".b_rec", g.b_rec);
  }
};

template <class Slot, class Net>
std::vector<Slot> collect_slots(Net& net, bool include_buffers) {
  SlotCollector<Slot> c;
  c.include_buffers = include_buffers;
  for (auto& layer : net.layers) {
    std::visit(
        [&](auto& body) {
          using Body = std::remove_cvref_t<decltype(body)>;
          if constexpr (std::is_same_v<Body, ConvBlock>) {
            c.block(layer.name, body);
          } else {
            c.grcl(layer.name, body);
          }
        },
        layer.body);
  }
  const auto s = net.readout.weight.shape();
  c.push("readout.weight", net.readout.weight.storage(), {s.n, s.c}, false);
  c.push("readout.bias", net.readout.bias, {net.readout.bias.size()}, false);
  return std::move(c.out);
}

}  // namespace

std::vector<ParamSlot> parameter_slots(Network& net, bool include_buffers) {
  return collect_slots<ParamSlot>(net, include_buffers);
}

std::vector<ConstParamSlot> parameter_slots(const Network& net, bool include_buffers) {
  return collect_slots<ConstParamSlot>(net, include_buffers);
}

std::vector<ParamSlot> parameter_slots(GrclParams& params, const std::string& prefix, bool include_buffers) {
  SlotCollector<ParamSlot> c;
  c.include_buffers = include_buffers;
  c.grcl(prefix, params);
  return std::move(c.out);
}

std::vector<ConstParamSlot> parameter_slots(const GrclParams& params, const std::string& prefix,
                                            bool include_buffers) {
  SlotCollector<ConstParamSlot> c;
  c.include_buffers = include_buffers;
  c.grcl(prefix, params);
  return std::move(c.out);
}

Network zeros_like(const Network& net) {
  Network z = net;
  for (auto& slot : parameter_slots(z, true)) std::fill(slot.values.begin(), slot.values.end(), 0.0);
  return z;
}

// ----------------------------------------------------------- forward pass

FeatureOutput forward_features(const Network& net, const Tensor& batch, Phase phase,
                               GateMode mode, std::size_t layer_count) {
  if (layer_count > net.layers.size()) {
    throw ContractError("forward_features: network has only " + std::to_string(net.layers.size()) + " layers");
  }
  if (batch.shape().c != net.config.input_channels) {
    throw ContractError("network_forward: batch has " + std::to_string(batch.shape().c) +
                        " channels, network expects " + std::to_string(net.config.input_channels));
  }
  FeatureOutput out;
  auto& cache = out.cache;
  cache.phase = phase;
  cache.mode = mode;
  cache.input_shape = batch.shape();
  cache.layers.reserve(layer_count);
  cache.updated_stats.resize(layer_count);

  Tensor x = batch;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const auto& layer = net.layers[i];
    const Phase layer_phase = phase == Phase::train && !net.group_frozen(layer.name) ? Phase::train : Phase::eval;
    if (const auto* block = std::get_if<ConvBlock>(&layer.body)) {
      ConvBlockCache c;
      auto r = conv_block_forward(*block, x, layer_phase, &c);
      x = std::move(r.output);
      cache.updated_stats[i].push_back(std::move(r.state));
      cache.layers.emplace_back(std::move(c));
    } else {
      auto r = grcl_forward(x, std::get<GrclParams>(layer.body), mode, layer_phase);
      x = std::move(r.output);
      cache.updated_stats[i] = r.cache.updated_stats;
      cache.layers.emplace_back(std::move(r.cache));
    }
  }
  out.features = std::move(x);
  return out;
}

NetworkOutput network_forward(const Network& net, const Tensor& batch, Phase phase, GateMode mode) {
  auto f = forward_features(net, batch, phase, mode, net.layers.size());
  NetworkOutput out;
  out.cache = std::move(f.cache);
  out.cache.pooled_from = f.features.shape();
  out.cache.pooled = global_avg_pool(f.features);
  out.logits = linear(out.cache.pooled, net.readout.weight, net.readout.bias);
  return out;
}

// ---------------------------------------------------------- backward pass

NetworkGrads features_backward(const Network& net, const NetworkCache& cache,
                               const Tensor& d_features, bool need_input_grad) {
  const std::size_t count = cache.layers.size();
  NetworkGrads g{Tensor(), zeros_like(net)};

  std::size_t first = 0;
  if (!need_input_grad) {
    first = count;
    for (std::size_t i = 0; i < count; ++i) {
      if (!net.group_frozen(net.layers[i].name)) {
        first = i;
        break;
      }
    }
  }

  Tensor d = d_features;
  for (std::size_t i = count; i-- > first;) {
    auto& grad_body = g.params.layers[i].body;
    if (const auto* c = std::get_if<ConvBlockCache>(&cache.layers[i])) {
      auto bg = conv_block_backward(*c, d);
      auto& gb = std::get<ConvBlock>(grad_body);
      gb.conv.weight = std::move(bg.d_weight);
      if (!gb.conv.bias.empty()) gb.conv.bias = std::move(bg.d_bias);
      gb.bn.gamma = std::move(bg.d_gamma);
      gb.bn.beta = std::move(bg.d_beta);
      d = std::move(bg.d_input);
    } else {
      const auto& params = std::get<GrclParams>(net.layers[i].body);
      auto gg = grcl_backward(params, std::get<GrclCache>(cache.layers[i]), d);
      std::get<GrclParams>(grad_body) = std::move(gg.params);
      d = std::move(gg.d_input);
    }
  }
  if (need_input_grad) g.d_input = std::move(d);
  return g;
}

NetworkGrads network_backward(const Network& net, const NetworkCache& cache,
                              const Tensor& d_logits, bool need_input_grad) {
  if (cache.layers.size() != net.layers.size()) {
    throw ContractError("network_backward: cache does not cover the full network");
  }
  auto lg = linear_backward(cache.pooled, net.readout.weight, d_logits);
  const Tensor d_features = global_avg_pool_backward(cache.pooled_from, lg.d_input);
  auto g = features_backward(net, cache, d_features, need_input_grad);
  g.params.readout.weight = std::move(lg.d_weights);
  g.params.readout.bias = std::move(lg.d_bias);
  return g;
}

void commit_running_stats(Network& net, const NetworkCache& cache) {
  for (std::size_t i = 0; i < cache.updated_stats.size(); ++i) {
    const auto& stats = cache.updated_stats[i];
    if (auto* block = std::get_if<ConvBlock>(&net.layers[i].body)) {
      block->bn.running_mean = stats.at(0).running_mean;
      block->bn.running_var = stats.at(0).running_var;
    } else {
      apply_running_stats(std::get<GrclParams>(net.layers[i].body), stats);
    }
  }
}

}  // namespace grcnn
