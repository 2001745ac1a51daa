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

// SGD optimization, the staged fine-tuning protocol and evaluation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "grcnn/augment.hpp"
#include "grcnn/dataset.hpp"
#include "grcnn/fft.hpp"
#include "grcnn/network.hpp"
#include "grcnn/objectives.hpp"
#include "grcnn/random.hpp"

namespace grcnn {

struct OptimizerState {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Momentum buffers keyed by parameter name. Frozen parameters never get one.
  std::map<std::string, std::vector<double>> buffers;
};

struct SgdParam {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
  bool frozen = false;
};

/// v <- mu v + g + wd p; p <- p - lr v. Every gradient is checked before any
/// parameter moves; a non-finite entry throws NumericError naming it.
void sgd_momentum_step(std::span<const SgdParam> params, OptimizerState& state);
/// Pairs the network's learnable parameters with a gradient bundle of the
/// same layout and skips frozen groups.
void sgd_momentum_step(Network& net, const Network& grads, OptimizerState& state);

enum class Stage { pretrain, finetune_v1, finetune_v2 };

Stage parse_stage(const std::string& name);  // pretrain | v1 | v2 (or finetune_v1/2)
std::string to_string(Stage stage);
/// The single GRCL group a fine-tuning stage trains ("grcl1" or "grcl2").
std::string stage_group(Stage stage);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<double> lr_milestones = {0.5, 0.75};  // fractions of `epochs`
  double lr_decay = 0.1;
  LossWeights weights;
  bool cutmix = false;
  double cutmix_prob = 0.5;
  bool augmix = false;
  AugmixConfig augmix_config;
  Stage stage = Stage::pretrain;
  double p_blend = 0.5;
  double alpha_min = 0.2;
  double alpha_max = 0.6;
  GateMode gate_mode = GateMode::learned;
  /// Reported when the divergence guard fires.
  std::string last_checkpoint;

  void validate() const;
};

/// Learning rate for a 0-based epoch under the step-decay schedule.
double scheduled_lr(const TrainConfig& cfg, std::size_t epoch);

struct OverlayPools {
  std::vector<RealGrid> textures;
  std::vector<RealGrid> noise;
};

/// Throws ConfigError when a stage lacks a required pool.
void check_pools(Stage stage, const OverlayPools& pools);

/// Everything a checkpoint captures.
struct TrainState {
  Network net;
  OptimizerState optimizer;
  Rng rng;
  std::size_t epoch = 0;  // completed epochs
};

TrainState make_train_state(Network net, const TrainConfig& cfg);

struct EvalMetrics {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::size_t samples = 0;
  /// Accuracy over samples whose true class maps to each superclass; empty
  /// without a map. Entries with no samples are NaN.
  std::vector<double> superclass_accuracy;
  std::vector<std::size_t> superclass_count;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
  double ce = 0.0;
  double js = 0.0;
  double super = 0.0;
  double train_accuracy = 0.0;
  std::size_t samples = 0;
  std::optional<EvalMetrics> test;
};

/// One JSON object per line: epoch, lr, loss components and accuracies.
std::string to_json_line(const EpochMetrics& m);

/// Shuffles from state.rng, then for each batch: stage blending, CutMix,
/// AugMix, forward, total loss, backward and an SGD step. The trailing
/// partial batch is dropped. Per-sample augmentation streams depend only on
/// (seed, epoch, sample index).
EpochMetrics train_epoch(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                         const OverlayPools* pools = nullptr, const SuperclassMap* map = nullptr);

using EpochCallback = std::function<void(const TrainState&, EpochMetrics&)>;

/// Runs epochs until state.epoch reaches cfg.epochs.
std::vector<EpochMetrics> run_training(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                                       const OverlayPools* pools = nullptr,
                                       const SuperclassMap* map = nullptr,
                                       const EpochCallback& on_epoch = {});

/// Freezes everything except the stage's GRCL block (dropping momentum
/// buffers and restarting the epoch count when the mask changes), checks the
/// overlay pools, then trains like run_training with per-sample blending.
std::vector<EpochMetrics> finetune_stage(TrainState& state, Stage stage, const Dataset& data,
                                         const OverlayPools& pools, const TrainConfig& cfg,
                                         const SuperclassMap* map = nullptr,
                                         const EpochCallback& on_epoch = {});

/// Eval-phase top-1 accuracy and mean cross-entropy. Throws on an empty set.
EvalMetrics evaluate(const Network& net, const Dataset& data, const SuperclassMap* map = nullptr,
                     GateMode mode = GateMode::learned, std::size_t batch_size = 250);

/// Names of learnable parameters and buffers whose values differ bitwise.
std::vector<std::string> changed_parameters(const Network& before, const Network& after);

}  // namespace grcnn
