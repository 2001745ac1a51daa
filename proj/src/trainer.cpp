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

#include "grcnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "json.hpp"

#include "grcnn/error.hpp"

namespace grcnn {

// --------------------------------------------------------------- optimizer

void sgd_momentum_step(std::span<const SgdParam> params, OptimizerState& state) {
  if (!(state.lr >= 0.0) || !std::isfinite(state.lr)) throw ContractError("sgd: learning rate must be >= 0");
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size()) {
      throw ContractError("sgd: gradient for '" + p.name + "' has " + std::to_string(p.grad.size()) +
                          " entries, parameter has " + std::to_string(p.value.size()));
    }
    if (p.frozen) continue;
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw NumericError("sgd: non-finite gradient in parameter '" + p.name + "'");
    }
  }
  for (const auto& p : params) {
    if (p.frozen) continue;
    auto& v = state.buffers[p.name];
    if (v.empty()) v.assign(p.value.size(), 0.0);
    if (v.size() != p.value.size()) throw ContractError("sgd: momentum buffer for '" + p.name + "' has the wrong size");
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = state.momentum * v[i] + p.grad[i] + state.weight_decay * p.value[i];
      p.value[i] -= state.lr * v[i];
    }
  }
}

void sgd_momentum_step(Network& net, const Network& grads, OptimizerState& state) {
  auto slots = parameter_slots(net);
  const auto grad_slots = parameter_slots(grads);
  if (slots.size() != grad_slots.size()) throw ContractError("sgd: gradient bundle does not match the network");
  std::vector<SgdParam> params;
  params.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].name != grad_slots[i].name) {
      throw ContractError("sgd: gradient '" + grad_slots[i].name + "' paired with '" + slots[i].name + "'");
    }
    params.push_back({slots[i].name, slots[i].values, grad_slots[i].values, net.is_frozen(slots[i].name)});
  }
  sgd_momentum_step(params, state);
}

// ------------------------------------------------------------------ config

Stage parse_stage(const std::string& name) {
  if (name == "pretrain") return Stage::pretrain;
  if (name == "v1" || name == "finetune_v1") return Stage::finetune_v1;
  if (name == "v2" || name == "finetune_v2") return Stage::finetune_v2;
  throw ConfigError("unknown stage '" + name + "' (expected pretrain, v1 or v2)");
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::pretrain: return "pretrain";
    case Stage::finetune_v1: return "finetune_v1";
    case Stage::finetune_v2: return "finetune_v2";
  }
  return "pretrain";
}

std::string stage_group(Stage stage) {
  switch (stage) {
    case Stage::finetune_v1: return grcl_group(1);
    case Stage::finetune_v2: return grcl_group(2);
    case Stage::pretrain: break;
  }
  throw ContractError("stage_group: pretraining has no single trainable block");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  for (double m : lr_milestones) {
    if (!(m > 0.0 && m <= 1.0)) throw ConfigError("train.lr_milestones entries must lie in (0, 1]");
  }
  if (!(lr_decay > 0.0)) throw ConfigError("train.lr_decay must be > 0");
  if (!(cutmix_prob >= 0.0 && cutmix_prob <= 1.0)) throw ConfigError("augment.cutmix_prob must lie in [0, 1]");
  if (!(p_blend >= 0.0 && p_blend <= 1.0)) throw ConfigError("finetune.p_blend must lie in [0, 1]");
  if (!(alpha_min >= 0.0 && alpha_min <= alpha_max && alpha_max <= 1.0)) {
    throw ConfigError("finetune.alpha_min/alpha_max must satisfy 0 <= min <= max <= 1");
  }
  for (double w : {weights.main, weights.js, weights.super}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be non-negative");
  }
  try {
    augmix_config.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  for (double m : cfg.lr_milestones) {
    if (static_cast<double>(epoch) >= m * static_cast<double>(cfg.epochs)) lr *= cfg.lr_decay;
  }
  return lr;
}

void check_pools(Stage stage, const OverlayPools& pools) {
  if (stage == Stage::pretrain) return;
  if (pools.textures.empty()) throw ConfigError(to_string(stage) + " needs a non-empty texture pool");
  if (stage == Stage::finetune_v1 && pools.noise.empty()) {
    throw ConfigError("finetune_v1 needs a non-empty noise pool");
  }
}

TrainState make_train_state(Network net, const TrainConfig& cfg) {
  TrainState s{std::move(net), {}, Rng(derive_seed(cfg.seed, 0x73687566666c65ULL)), 0};
  s.optimizer.lr = cfg.lr;
  s.optimizer.momentum = cfg.momentum;
  s.optimizer.weight_decay = cfg.weight_decay;
  return s;
}

// ------------------------------------------------------------------ epochs

namespace {

constexpr std::uint64_t kBlendStream = 0x626c656e64ULL;
constexpr std::uint64_t kCutmixStream = 0x6375746d6978ULL;
constexpr std::uint64_t kAugmixStream = 0x4175674d6978ULL;

std::size_t argmax_row(const Tensor& t, std::size_t row) {
  const std::size_t k = t.shape().sample();
  const double* p = t.data() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

void blend_sample(Tensor& batch, std::size_t n, const TrainConfig& cfg, const OverlayPools& pools,
                  Rng& rng) {
  std::bernoulli_distribution apply(cfg.p_blend);
  if (!apply(rng)) return;
  const std::vector<RealGrid>* pool = &pools.textures;
  if (cfg.stage == Stage::finetune_v1) {
    std::bernoulli_distribution pick_noise(0.5);
    if (pick_noise(rng)) pool = &pools.noise;
  }
  std::uniform_int_distribution<std::size_t> pick(0, pool->size() - 1);
  const RealGrid& source = (*pool)[pick(rng)];
  std::uniform_real_distribution<double> alpha(cfg.alpha_min, cfg.alpha_max);
  const double a = alpha(rng);
  const Shape s = batch.shape();
  const Tensor overlay = fit_overlay(source, s.h, s.w, rng);
  const Tensor one = batch.slice(n, 1);
  const Tensor mixed = blend(one, overlay, a);
  std::copy(mixed.data(), mixed.data() + s.sample(), batch.data() + n * s.sample());
}

}  // namespace

EpochMetrics train_epoch(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                         const OverlayPools* pools, const SuperclassMap* map) {
  cfg.validate();
  data.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  if (cfg.batch_size > data.size()) {
    throw ConfigError("batch size " + std::to_string(cfg.batch_size) + " exceeds the dataset size " +
                      std::to_string(data.size()));
  }
  if (data.num_classes != state.net.config.num_classes) {
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes, model expects " +
                      std::to_string(state.net.config.num_classes));
  }
  const auto groups = state.net.groups();
  if (std::all_of(groups.begin(), groups.end(), [&](const auto& g) { return state.net.group_frozen(g); })) {
    throw ConfigError("every layer group is frozen; nothing to train");
  }
  if (cfg.stage != Stage::pretrain) {
    if (pools == nullptr) throw ConfigError(to_string(cfg.stage) + " needs overlay pools");
    check_pools(cfg.stage, *pools);
  }
  const SuperclassMap* super_map = map != nullptr && cfg.weights.super > 0.0 ? map : nullptr;

  const std::size_t epoch = state.epoch;
  state.optimizer.lr = scheduled_lr(cfg, epoch);
  state.optimizer.momentum = cfg.momentum;
  state.optimizer.weight_decay = cfg.weight_decay;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), state.rng);

  EpochMetrics m;
  m.epoch = epoch + 1;
  m.lr = state.optimizer.lr;
  std::size_t correct = 0;
  const std::size_t batches = data.size() / cfg.batch_size;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::span<const std::size_t> idx(order.data() + b * cfg.batch_size, cfg.batch_size);
    Tensor x = data.batch(idx);
    Tensor y = data.one_hot(idx);
    const std::size_t n = idx.size();

    if (cfg.stage != Stage::pretrain && cfg.p_blend > 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(cfg.seed ^ kBlendStream, epoch, idx[i]));
        blend_sample(x, i, cfg, *pools, rng);
      }
    }
    if (cfg.cutmix) {
      Rng rng(derive_seed(cfg.seed ^ kCutmixStream, epoch, b));
      std::bernoulli_distribution apply(cfg.cutmix_prob);
      if (apply(rng)) cutmix_batch(x, y, rng);
    }

    Tensor input;
    if (cfg.augmix) {
      std::vector<Tensor> aug1, aug2;
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(cfg.seed ^ kAugmixStream, epoch, idx[i]));
        auto triple = augmix(x.slice(i, 1), cfg.augmix_config, rng);
        aug1.push_back(std::move(triple.aug1));
        aug2.push_back(std::move(triple.aug2));
      }
      const std::vector<Tensor> parts{x, concat_batch(aug1), concat_batch(aug2)};
      input = concat_batch(parts);
    } else {
      input = std::move(x);
    }

    auto out = network_forward(state.net, input, Phase::train, cfg.gate_mode);
    TotalLoss loss;
    if (cfg.augmix) {
      const Tensor clean = out.logits.slice(0, n);
      const Tensor l1 = out.logits.slice(n, n);
      const Tensor l2 = out.logits.slice(2 * n, n);
      loss = total_loss(clean, y, &l1, &l2, super_map, cfg.weights);
      for (std::size_t i = 0; i < n; ++i) correct += argmax_row(clean, i) == argmax_row(y, i);
    } else {
      loss = total_loss(out.logits, y, nullptr, nullptr, super_map, cfg.weights);
      for (std::size_t i = 0; i < n; ++i) correct += argmax_row(out.logits, i) == argmax_row(y, i);
    }
    if (!std::isfinite(loss.total) || loss.total > 1e4) {
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(b + 1) + " (loss " + std::to_string(loss.total) +
                            "); last good checkpoint: " +
                            (cfg.last_checkpoint.empty() ? std::string("none") : cfg.last_checkpoint));
    }

    Tensor d_logits;
    if (cfg.augmix) {
      const std::vector<Tensor> parts{loss.d_logits, loss.d_logits_aug1, loss.d_logits_aug2};
      d_logits = concat_batch(parts);
    } else {
      d_logits = std::move(loss.d_logits);
    }
    const auto grads = network_backward(state.net, out.cache, d_logits);
    sgd_momentum_step(state.net, grads.params, state.optimizer);
    commit_running_stats(state.net, out.cache);

    const double w = static_cast<double>(n);
    m.loss += loss.total * w;
    m.ce += loss.ce * w;
    m.js += loss.js * w;
    m.super += loss.super * w;
    m.samples += n;
  }
  const double total = static_cast<double>(m.samples);
  m.loss /= total;
  m.ce /= total;
  m.js /= total;
  m.super /= total;
  m.train_accuracy = static_cast<double>(correct) / total;
  state.epoch = epoch + 1;
  return m;
}

std::vector<EpochMetrics> run_training(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                                       const OverlayPools* pools, const SuperclassMap* map,
                                       const EpochCallback& on_epoch) {
  std::vector<EpochMetrics> history;
  while (state.epoch < cfg.epochs) {
    history.push_back(train_epoch(state, data, cfg, pools, map));
    if (on_epoch) on_epoch(state, history.back());
  }
  return history;
}

std::vector<EpochMetrics> finetune_stage(TrainState& state, Stage stage, const Dataset& data,
                                         const OverlayPools& pools, const TrainConfig& cfg,
                                         const SuperclassMap* map, const EpochCallback& on_epoch) {
  check_pools(stage, pools);
  const std::string group = stage_group(stage);
  Network frozen = freeze(state.net, {group});
  if (frozen.frozen != state.net.frozen) {
    state.net = std::move(frozen);
    state.optimizer.buffers.clear();
    state.epoch = 0;
  }
  TrainConfig stage_cfg = cfg;
  stage_cfg.stage = stage;
  return run_training(state, data, stage_cfg, &pools, map, on_epoch);
}

// -------------------------------------------------------------- evaluation

EvalMetrics evaluate(const Network& net, const Dataset& data, const SuperclassMap* map, GateMode mode,
                     std::size_t batch_size) {
  data.validate();
  if (data.empty()) throw ConfigError("evaluation set is empty");
  if (batch_size == 0) throw ContractError("evaluate: batch size must be >= 1");
  if (map != nullptr && map->class_count() != data.num_classes) {
    throw ConfigError("superclass map covers " + std::to_string(map->class_count()) + " classes, dataset has " +
                      std::to_string(data.num_classes));
  }
  EvalMetrics r;
  std::size_t correct = 0;
  std::vector<std::size_t> super_correct(kSuperclassCount, 0);
  if (map != nullptr) r.superclass_count.assign(kSuperclassCount, 0);
  for (std::size_t first = 0; first < data.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - first);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), first);
    const auto out = network_forward(net, data.batch(idx), Phase::eval, mode);
    const auto ce = softmax_cross_entropy(out.logits, data.one_hot(idx));
    r.mean_loss += ce.loss * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t truth = data.labels[idx[i]];
      const bool hit = argmax_row(out.logits, i) == truth;
      correct += hit;
      if (map != nullptr && map->class_to_super[truth] != kUnmapped) {
        const auto s = static_cast<std::size_t>(map->class_to_super[truth]);
        ++r.superclass_count[s];
        super_correct[s] += hit;
      }
    }
  }
  r.samples = data.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.samples);
  r.mean_loss /= static_cast<double>(r.samples);
  if (map != nullptr) {
    for (std::size_t s = 0; s < kSuperclassCount; ++s) {
      r.superclass_accuracy.push_back(r.superclass_count[s] == 0
                                          ? std::nan("")
                                          : static_cast<double>(super_correct[s]) /
                                                static_cast<double>(r.superclass_count[s]));
    }
  }
  return r;
}

std::string to_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["lr"] = m.lr;
  j["loss"] = m.loss;
  j["ce"] = m.ce;
  j["js"] = m.js;
  j["super"] = m.super;
  j["train_accuracy"] = m.train_accuracy;
  j["samples"] = m.samples;
  if (m.test) {
    j["test_accuracy"] = m.test->accuracy;
    j["test_loss"] = m.test->mean_loss;
    if (!m.test->superclass_accuracy.empty()) j["test_superclass_accuracy"] = m.test->superclass_accuracy;
  }
  return j.dump();
}

std::vector<std::string> changed_parameters(const Network& before, const Network& after) {
  const auto a = parameter_slots(before, true);
  const auto b = parameter_slots(after, true);
  if (a.size() != b.size()) throw ContractError("changed_parameters: networks have different layouts");
  std::vector<std::string> changed;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].values.size() != b[i].values.size()) {
      throw ContractError("changed_parameters: networks have different layouts");
    }
    if (std::memcmp(a[i].values.data(), b[i].values.data(), a[i].values.size() * sizeof(double)) != 0) {
      changed.push_back(a[i].name);
    }
  }
  return changed;
}

}  // namespace grcnn
