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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "grcnn/checkpoint.hpp"
#include "grcnn/config.hpp"
#include "grcnn/dataset.hpp"
#include "grcnn/error.hpp"
#include "grcnn/trainer.hpp"
#include "oracles.hpp"

using namespace grcnn;
namespace fs = std::filesystem;

namespace {

GrcnnConfig small_model(std::size_t classes) {
  GrcnnConfig c = GrcnnConfig::tiny();
  c.num_classes = classes;
  return c;
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.seed = 3;
  return cfg;
}

TrainState fresh_state(const GrcnnConfig& model, const TrainConfig& cfg, std::uint64_t seed = 1) {
  Rng rng(seed);
  return make_train_state(build_grcnn(model, rng), cfg);
}

bool same_parameters(const Network& a, const Network& b) {
  return changed_parameters(a, b).empty();
}

OverlayPools random_pools(Rng& rng) {
  OverlayPools pools;
  for (int i = 0; i < 3; ++i) {
    RealGrid g(20, 24);
    for (auto& v : g.data) v = std::uniform_real_distribution<double>(0, 1)(rng);
    pools.textures.push_back(g);
    pools.noise.push_back(phase_randomize(g, rng));
  }
  return pools;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("grcnn_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("momentum SGD hand sequence") {
  std::vector<double> p = {1.0};
  std::vector<double> g(1);
  OptimizerState opt{0.2, 0.9, 0.0, {}};
  const double want[] = {0.8, 0.46, 0.062};
  for (double w : want) {
    g[0] = p[0];
    const SgdParam param{"x", p, g, false};
    sgd_momentum_step(std::span(&param, 1), opt);
    CHECK(p[0] == doctest::Approx(w).epsilon(1e-15));
  }
}

TEST_CASE("SGD weight decay, frozen parameters and non-finite gradients") {
  std::vector<double> p = {2.0, 3.0}, q = {5.0};
  std::vector<double> g = {0.0, 1.0}, h = {1.0};
  OptimizerState opt{0.1, 0.0, 0.5, {}};
  const SgdParam params[] = {{"p", p, g, false}, {"q", q, h, true}};
  sgd_momentum_step(params, opt);
  CHECK(p[0] == doctest::Approx(2.0 - 0.1 * 1.0));
  CHECK(p[1] == doctest::Approx(3.0 - 0.1 * 2.5));
  CHECK(q[0] == 5.0);
  CHECK_FALSE(opt.buffers.contains("q"));

  std::vector<double> bad = {NAN, 0.0};
  const std::vector<double> before = p;
  const SgdParam broken[] = {{"ok", q, h, false}, {"p", p, bad, false}};
  CHECK_THROWS_AS(sgd_momentum_step(broken, opt), NumericError);
  CHECK(p == before);
  CHECK(q[0] == 5.0);
}

TEST_CASE("learning-rate schedule and config validation") {
  TrainConfig cfg;
  cfg.epochs = 20;
  CHECK(scheduled_lr(cfg, 0) == 0.05);
  CHECK(scheduled_lr(cfg, 9) == 0.05);
  CHECK(scheduled_lr(cfg, 10) == doctest::Approx(0.005));
  CHECK(scheduled_lr(cfg, 15) == doctest::Approx(0.0005));
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_stage("v2") == Stage::finetune_v2);
  CHECK(stage_group(Stage::finetune_v1) == "grcl1");
  CHECK_THROWS_AS(parse_stage("v3"), ConfigError);
  CHECK_THROWS_AS(check_pools(Stage::finetune_v1, OverlayPools{{RealGrid(2, 2)}, {}}), ConfigError);
  CHECK_NOTHROW(check_pools(Stage::finetune_v2, OverlayPools{{RealGrid(2, 2)}, {}}));
}

TEST_CASE("synthetic corpus") {
  const Dataset a = make_synthetic(40, 16, 5);
  const Dataset b = make_synthetic(40, 16, 5);
  CHECK(a.num_classes == kSyntheticClasses);
  CHECK(a.images.shape() == Shape{40, 3, 16, 16});
  CHECK(bitwise_equal(a.images, b.images));
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < 40; ++i) CHECK(a.labels[i] == i % 10);
  for (double v : a.images.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_FALSE(bitwise_equal(a.images, make_synthetic(40, 16, 6).images));
  const std::size_t idx[] = {3, 7};
  const Tensor oh = a.one_hot(idx);
  CHECK(oh.at(1, 7, 0, 0) == 1.0);
  CHECK(a.batch(idx).shape().n == 2);
}

TEST_CASE("image folder round trip") {
  const fs::path dir = scratch("folder");
  const Dataset a = make_synthetic(20, 12, 1);
  write_image_folder(a, dir);
  const Dataset b = load_image_folder(dir, 12);
  CHECK(b.size() == 20);
  CHECK(b.num_classes == 10);
  CHECK(b.class_names[0] == "00_" + a.class_names[0]);
  for (std::size_t i = 0; i < b.size(); ++i) {
    // Folder order is by class, then by file name.
    const std::size_t src = (i % 2) * 10 + i / 2;
    CHECK(b.labels[i] == a.labels[src]);
    for (std::size_t j = 0; j < 3 * 144; ++j) {
      CHECK(std::abs(b.images[i * 432 + j] - a.images[src * 432 + j]) <= 0.5 / 255.0 + 1e-12);
    }
  }
  CHECK_THROWS_AS(load_image_folder(dir, 16), IoError);
  CHECK_THROWS_AS(load_image_folder(dir / "missing", 12), IoError);
  fs::remove_all(dir);
}

TEST_CASE("separable toy: loss decreases and reaches full accuracy") {
  const Dataset data = make_separable_toy(128, 16, 1);
  TrainConfig cfg = quick_config(5);
  TrainState state = fresh_state(small_model(2), cfg);
  const auto history = run_training(state, data, cfg);
  REQUIRE(history.size() == 5);
  CHECK(history.back().loss < history.front().loss);
  CHECK(evaluate(state.net, data).accuracy == 1.0);
  CHECK(evaluate(state.net, make_separable_toy(64, 16, 2)).accuracy == 1.0);
}

TEST_CASE("training is deterministic") {
  const Dataset data = make_synthetic(64, 16, 2);
  TrainConfig cfg = quick_config(2);
  cfg.cutmix = true;
  cfg.augmix = true;
  TrainState a = fresh_state(small_model(10), cfg);
  TrainState b = fresh_state(small_model(10), cfg);
  const auto ha = run_training(a, data, cfg);
  const auto hb = run_training(b, data, cfg);
  for (std::size_t i = 0; i < ha.size(); ++i) CHECK(to_json_line(ha[i]) == to_json_line(hb[i]));
  CHECK(same_parameters(a.net, b.net));
  CHECK(ha.back().js > 0.0);
  const auto e1 = evaluate(a.net, data);
  const auto e2 = evaluate(a.net, data, nullptr, GateMode::learned, 7);
  CHECK(e1.accuracy == e2.accuracy);
  CHECK(e1.mean_loss == doctest::Approx(e2.mean_loss).epsilon(1e-12));
}

TEST_CASE("training guards") {
  const Dataset data = make_synthetic(32, 16, 2);
  TrainConfig cfg = quick_config(1);
  TrainState state = fresh_state(small_model(10), cfg);
  TrainConfig big = cfg;
  big.batch_size = 64;
  CHECK_THROWS_AS(train_epoch(state, data, big), ConfigError);
  TrainState wrong = fresh_state(small_model(3), cfg);
  CHECK_THROWS_AS(train_epoch(wrong, data, cfg), ConfigError);
  CHECK_THROWS_AS(evaluate(state.net, Dataset{}), ConfigError);

  TrainConfig hot = cfg;
  hot.lr = 1e6;
  hot.last_checkpoint = "/tmp/last.ckpt";
  TrainState diverging = fresh_state(small_model(10), hot);
  try {
    train_epoch(diverging, data, hot);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("/tmp/last.ckpt") != std::string::npos);
  } catch (const NumericError&) {
  }
}

TEST_CASE("zero learning rate leaves learnable parameters unchanged") {
  const Dataset data = make_synthetic(32, 16, 2);
  TrainConfig cfg = quick_config(1);
  cfg.lr = 0.0;
  TrainState state = fresh_state(small_model(10), cfg);
  const Network before = state.net;
  run_training(state, data, cfg);
  for (const auto& name : changed_parameters(before, state.net)) {
    INFO(name);
    CHECK(name.find("running_") != std::string::npos);
  }
}

TEST_CASE("fine-tuning changes exactly one block") {
  Rng rng(4);
  const OverlayPools pools = random_pools(rng);
  const Dataset data = make_synthetic(32, 16, 3);
  TrainConfig cfg = quick_config(1);
  TrainState base = fresh_state(small_model(10), cfg);
  run_training(base, data, cfg);
  for (Stage stage : {Stage::finetune_v1, Stage::finetune_v2}) {
    TrainState state = base;
    finetune_stage(state, stage, data, pools, cfg);
    const auto changed = changed_parameters(base.net, state.net);
    CHECK_FALSE(changed.empty());
    for (const auto& name : changed) {
      INFO(name);
      CHECK(name.starts_with(stage_group(stage) + "."));
    }
    CHECK(state.net.frozen.size() == 9);
  }
  TrainState missing = base;
  CHECK_THROWS_AS(finetune_stage(missing, Stage::finetune_v1, data, OverlayPools{pools.textures, {}}, cfg), ConfigError);
}

TEST_CASE("checkpoint round trip and split resume") {
  const fs::path dir = scratch("ckpt");
  Rng prng(5);
  const OverlayPools pools = random_pools(prng);
  const Dataset data = make_synthetic(48, 16, 4);
  TrainConfig cfg = quick_config(3);
  cfg.cutmix = true;

  TrainState straight = fresh_state(small_model(10), cfg);
  const auto full = run_training(straight, data, cfg);

  TrainState first = fresh_state(small_model(10), cfg);
  train_epoch(first, data, cfg);
  save_checkpoint(first, dir / "a.ckpt");
  TrainState resumed = load_checkpoint(dir / "a.ckpt");
  CHECK(resumed.epoch == 1);
  CHECK(same_parameters(resumed.net, first.net));
  CHECK(resumed.rng == first.rng);
  CHECK(resumed.optimizer.buffers == first.optimizer.buffers);
  const auto rest = run_training(resumed, data, cfg);
  REQUIRE(rest.size() == 2);
  CHECK(to_json_line(rest[1]) == to_json_line(full[2]));
  CHECK(same_parameters(resumed.net, straight.net));

  // Fine-tuning split across a checkpoint.
  TrainConfig ft = quick_config(2);
  TrainState one = straight;
  finetune_stage(one, Stage::finetune_v2, data, pools, ft);
  TrainState two = straight;
  TrainConfig half = ft;
  half.epochs = 1;
  finetune_stage(two, Stage::finetune_v2, data, pools, half);
  save_checkpoint(two, dir / "b.ckpt");
  TrainState back = load_checkpoint(dir / "b.ckpt");
  CHECK(back.net.frozen == two.net.frozen);
  finetune_stage(back, Stage::finetune_v2, data, pools, ft);
  CHECK(same_parameters(back.net, one.net));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint corruption is detected without touching the target") {
  const fs::path dir = scratch("corrupt");
  TrainConfig cfg = quick_config(1);
  const TrainState state = fresh_state(small_model(10), cfg);
  save_checkpoint(state, dir / "ok.ckpt");
  std::ifstream in(dir / "ok.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});

  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  std::string magic = bytes;
  magic[0] = 'X';
  std::string version = bytes;
  version[8] = 9;
  std::string trailing = bytes + "junk";

  TrainState target = fresh_state(small_model(10), cfg, 99);
  const Network untouched = target.net;
  CHECK_THROWS_AS(load_checkpoint(write("magic.ckpt", magic), target), CheckpointFormatError);
  CHECK_THROWS_AS(load_checkpoint(write("version.ckpt", version), target), CheckpointVersionError);
  CHECK_THROWS_AS(load_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() / 2)), target),
                  CheckpointTruncatedError);
  CHECK_THROWS_AS(load_checkpoint(write("trail.ckpt", trailing), target), CheckpointFormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt", target), IoError);
  TrainState other = fresh_state(small_model(7), cfg);
  CHECK_THROWS_AS(load_checkpoint(dir / "ok.ckpt", other), CheckpointShapeError);
  CHECK(same_parameters(target.net, untouched));
  CHECK(read_checkpoint_config(dir / "ok.ckpt").num_classes == 10);
  CHECK(parse_model_description(describe_model(GrcnnConfig::paper())).blocks[3].channels == 512);
  fs::remove_all(dir);
}

TEST_CASE("config precedence and validation") {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "c.json") << R"({"train.lr": 0.2, "train": {"epochs": 4}, "augment.cutmix": true})";
  std::ofstream(dir / "bad.json") << R"({"train.lrr": 0.2})";
  std::ofstream(dir / "type.json") << R"({"train.epochs": "four"})";
  std::ofstream(dir / "broken.json") << "{";

  Config c = Config::defaults("tiny");
  CHECK(c.num("train.lr") == 0.05);
  c.merge_file(dir / "c.json");
  CHECK(c.num("train.lr") == 0.2);
  CHECK(c.count("train.epochs") == 4);
  c.set_override("train.lr=0.3");
  c.set("train.lr_milestones", "0.25,0.5");
  c.set("model.gate_mode", "ablated");
  const TrainConfig t = c.train();
  CHECK(t.lr == 0.3);
  CHECK(t.epochs == 4);
  CHECK(t.cutmix);
  CHECK(t.lr_milestones == std::vector<double>{0.25, 0.5});
  CHECK(t.gate_mode == GateMode::ablated);
  CHECK(c.values().at("train.lr") == 0.3);

  CHECK_THROWS_AS(c.merge_file(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(c.merge_file(dir / "type.json"), ConfigError);
  CHECK_THROWS_AS(c.merge_file(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(c.merge_file(dir / "none.json"), ConfigError);
  CHECK_THROWS_AS(c.set_override("train.lr"), ConfigError);
  CHECK_THROWS_AS(c.set("train.epochs", "-1"), ConfigError);
  CHECK_THROWS_AS(c.set("augment.cutmix", "yes"), ConfigError);
  c.set("model.gate_mode", "sideways");
  CHECK_THROWS_AS(c.train(), ConfigError);
  CHECK_THROWS_AS(Config::defaults("huge"), ConfigError);
  CHECK(Config::defaults("paper").model().num_classes == 1000);
  CHECK(preset_in_file(dir / "c.json").empty());
  fs::remove_all(dir);
}
