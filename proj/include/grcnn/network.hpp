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
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "grcnn/grcl.hpp"

namespace grcnn {

struct BlockConfig {
  std::size_t channels = 0;
  std::size_t steps = 3;
  /// Insert a stride-2 1x1 projection (conv -> bn -> relu) before the block.
  bool downsample = false;
};

struct GrcnnConfig {
  std::string preset = "custom";
  std::size_t input_channels = 3;
  std::size_t stem_channels[2] = {0, 0};
  std::vector<BlockConfig> blocks;
  bool tie_weights = true;
  std::size_t feed_kernel = 3;
  std::size_t rec_kernel = 3;
  std::size_t gate_kernel = 1;
  std::size_t num_classes = 10;

  /// Two 3x3 stem convs (stride 1 then 2), four GRCLs with T = 3 at widths
  /// 64/128/256/512, global pooling and a 1000-way readout.
  static GrcnnConfig paper();
  /// Same topology at widths 8/16/32/64 with a 10-way readout.
  static GrcnnConfig tiny();
  static GrcnnConfig from_preset(const std::string& name);

  void validate() const;
};

struct Linear {
  Tensor weight;  // (out, in, 1, 1)
  std::vector<double> bias;
};

struct Layer {
  std::string name;
  std::variant<ConvBlock, GrclParams> body;
};

struct Network {
  GrcnnConfig config;
  std::vector<Layer> layers;
  Linear readout;
  /// Frozen layer groups (layer names plus "readout").
  std::set<std::string> frozen;

  [[nodiscard]] std::vector<std::string> groups() const;
  [[nodiscard]] bool group_frozen(std::string_view group) const { return frozen.contains(std::string(group)); }
  /// Per-parameter freeze query; the group is the name prefix before '.'.
  [[nodiscard]] bool is_frozen(std::string_view param_name) const;
  [[nodiscard]] const GrclParams& grcl(std::size_t index) const;  // 1-based
  [[nodiscard]] std::size_t layer_index(std::string_view name) const;
};

std::string grcl_group(std::size_t index);  // "grcl<index>", 1-based

/// Deterministic in `rng`. Conv weights He-normal; readout weights normal
/// with std 1/sqrt(fan_in) and zero bias.
Network build_grcnn(const GrcnnConfig& config, Rng& rng);

/// Marks every group outside `trainable` as frozen. Unknown names throw.
Network freeze(Network net, const std::set<std::string>& trainable);

template <class T>
struct BasicParamSlot {
  std::string name;
  std::span<T> values;
  std::vector<std::size_t> dims;
  bool buffer = false;  // running statistics rather than learnable values
};
using ParamSlot = BasicParamSlot<double>;
using ConstParamSlot = BasicParamSlot<const double>;

/// Learnable parameters (and optionally batch-norm running statistics) in a
/// fixed canonical order with dotted names such as "grcl1.a_rec.bn2.gamma".
std::vector<ParamSlot> parameter_slots(Network& net, bool include_buffers = false);
std::vector<ConstParamSlot> parameter_slots(const Network& net, bool include_buffers = false);
/// Slots of a single block, named "<prefix>.a0.conv.weight" and so on.
std::vector<ParamSlot> parameter_slots(GrclParams& params, const std::string& prefix,
                                       bool include_buffers = false);
std::vector<ConstParamSlot> parameter_slots(const GrclParams& params, const std::string& prefix,
                                            bool include_buffers = false);

using LayerCache = std::variant<ConvBlockCache, GrclCache>;

struct NetworkCache {
  Phase phase = Phase::train;
  GateMode mode = GateMode::learned;
  Shape input_shape;
  std::vector<LayerCache> layers;
  std::vector<std::vector<BatchNormState>> updated_stats;  // per layer
  Shape pooled_from;
  Tensor pooled;
};

struct NetworkOutput {
  Tensor logits;
  NetworkCache cache;
};

struct FeatureOutput {
  Tensor features;
  NetworkCache cache;
};

/// Runs the first `layer_count` layers. Frozen layers use eval-mode batch norm
/// even in the train phase so their running statistics stay fixed.
FeatureOutput forward_features(const Network& net, const Tensor& batch, Phase phase,
                               GateMode mode, std::size_t layer_count);

/// stem -> GRCL blocks (with projections) -> global average pool -> linear.
NetworkOutput network_forward(const Network& net, const Tensor& batch, Phase phase,
                              GateMode mode = GateMode::learned);

struct NetworkGrads {
  Tensor d_input;  // empty unless requested
  Network params;  // gradient bundle laid out like the network
};

NetworkGrads network_backward(const Network& net, const NetworkCache& cache,
                              const Tensor& d_logits, bool need_input_grad = false);
/// Backward from the output of forward_features.
NetworkGrads features_backward(const Network& net, const NetworkCache& cache,
                               const Tensor& d_features, bool need_input_grad = true);

/// Writes the running statistics recorded by a train-phase forward.
void commit_running_stats(Network& net, const NetworkCache& cache);

Network zeros_like(const Network& net);

}  // namespace grcnn
