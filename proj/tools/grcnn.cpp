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

// grcnn: command-line entry point.
//
// Exit codes: 0 success, 1 verification or training failure, 2 configuration
// or input error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "grcnn/augment.hpp"
#include "grcnn/checkpoint.hpp"
#include "grcnn/config.hpp"
#include "grcnn/dataset.hpp"
#include "grcnn/error.hpp"
#include "grcnn/gradcheck.hpp"
#include "grcnn/probe.hpp"
#include "grcnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace grcnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;

struct Options {
  std::string config_path;
  std::string out = "out";
  std::string preset;
  std::vector<std::string> sets;
  // Flags that map onto config keys; filled per subcommand.
  std::vector<std::pair<std::string, std::string>> flags;
};

/// Binds a string flag to a config key. The value is recorded only when the
/// flag is given.
void bind(CLI::App* cmd, Options& opts, const std::string& flag, const std::string& key,
          const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&opts, key](const std::string& v) { opts.flags.emplace_back(key, v); }, help);
}

void add_common(CLI::App* cmd, Options& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file with flat dotted keys");
  bind(cmd, opts, "--seed", "seed", "global seed");
  cmd->add_option("--out", opts.out, "output directory")->capture_default_str();
  cmd->add_option("--preset", opts.preset, "model preset")->check(CLI::IsMember({"tiny", "paper"}));
  cmd->add_option("--set", opts.sets, "override a config key (key=value), repeatable");
}

Config resolve(const Options& opts) {
  std::string preset = opts.preset;
  if (preset.empty()) {
    for (const auto& s : opts.sets) {
      if (s.starts_with("model.preset=")) preset = s.substr(13);
    }
  }
  if (preset.empty() && !opts.config_path.empty()) preset = preset_in_file(opts.config_path);
  if (preset.empty()) preset = "tiny";
  if (preset != "tiny" && preset != "paper") throw ConfigError("unknown preset '" + preset + "'");

  Config cfg = Config::defaults(preset);
  if (!opts.config_path.empty()) cfg.merge_file(opts.config_path);
  for (const auto& [key, value] : opts.flags) cfg.set(key, value);
  for (const auto& s : opts.sets) cfg.set_override(s);
  if (cfg.str("model.preset") != preset) throw ConfigError("model.preset conflicts with --preset");
  static_cast<void>(cfg.model());
  static_cast<void>(cfg.train());
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

fs::path require_existing(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is not set");
  if (!fs::exists(path)) throw IoError(what + " '" + path + "' does not exist");
  return path;
}

Dataset load_split(const Config& cfg, bool train) {
  const std::string dir = cfg.str(train ? "data.train_dir" : "data.test_dir");
  const std::size_t size = cfg.count("data.image_size");
  Dataset data;
  if (dir.empty()) {
    const std::uint64_t seed = derive_seed(cfg.count("data.synthetic_seed"), train ? 0 : 1);
    data = make_synthetic(cfg.count(train ? "data.synthetic_train" : "data.synthetic_test"), size, seed);
  } else {
    data = load_image_folder(require_existing(dir, train ? "data.train_dir" : "data.test_dir"), size);
  }
  if (data.num_classes != cfg.count("model.num_classes")) {
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes but model.num_classes is " +
                      std::to_string(cfg.count("model.num_classes")));
  }
  return data;
}

std::optional<SuperclassMap> load_map(const Config& cfg) {
  const std::string map = cfg.str("objectives.superclass_map");
  if (map.empty()) return std::nullopt;
  const fs::path ref = require_existing(cfg.str("objectives.reference"), "objectives.reference");
  auto m = SuperclassMap::load(require_existing(map, "objectives.superclass_map"), ref);
  if (m.class_count() != cfg.count("model.num_classes")) {
    throw ConfigError("superclass map covers " + std::to_string(m.class_count()) + " classes, model has " +
                      std::to_string(cfg.count("model.num_classes")));
  }
  return m;
}

TrainState load_matching(const fs::path& path, const GrcnnConfig& model) {
  TrainState state = load_checkpoint(path);
  if (config_digest(state.net.config) != config_digest(model)) {
    throw CheckpointShapeError("checkpoint '" + path.string() + "' was written for a different model:\n" +
                               describe_model(state.net.config));
  }
  return state;
}

nlohmann::ordered_json eval_json(const EvalMetrics& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["mean_loss"] = m.mean_loss;
  j["samples"] = m.samples;
  if (!m.superclass_count.empty()) {
    auto acc = nlohmann::json::array();
    for (double a : m.superclass_accuracy) acc.push_back(std::isnan(a) ? nlohmann::json() : nlohmann::json(a));
    j["superclass_accuracy"] = acc;
    j["superclass_count"] = m.superclass_count;
  }
  return j;
}

// ------------------------------------------------------------------ train

int cmd_train(const Config& cfg, const fs::path& out) {
  const GrcnnConfig model = cfg.model();
  TrainConfig tc = cfg.train();
  const Dataset train = load_split(cfg, true);
  const Dataset test = load_split(cfg, false);
  const auto map = load_map(cfg);
  const fs::path ckpt = out / "checkpoint.bin";
  tc.last_checkpoint = ckpt.string();

  const std::string resume = cfg.str("train.resume");
  TrainState state;
  if (resume.empty()) {
    Rng init(derive_seed(tc.seed, hash_name("init")));
    state = make_train_state(build_grcnn(model, init), tc);
  } else {
    state = load_matching(require_existing(resume, "train.resume"), model);
  }

  const auto mode = resume.empty() ? std::ios::trunc : std::ios::app;
  std::ofstream log(out / "metrics.jsonl", std::ios::out | mode);
  if (!log) throw IoError("cannot write '" + (out / "metrics.jsonl").string() + "'");
  const std::size_t every = std::max<std::size_t>(1, cfg.count("train.checkpoint_every"));

  run_training(state, train, tc, nullptr, map ? &*map : nullptr, [&](const TrainState& s, EpochMetrics& m) {
    m.test = evaluate(s.net, test, map ? &*map : nullptr, tc.gate_mode);
    const std::string line = to_json_line(m);
    log << line << '\n' << std::flush;
    std::cout << line << '\n' << std::flush;
    if (s.epoch % every == 0) save_checkpoint(s, ckpt);
  });
  save_checkpoint(state, ckpt);

  nlohmann::ordered_json summary;
  summary["epochs"] = state.epoch;
  summary["train"] = eval_json(evaluate(state.net, train, map ? &*map : nullptr, tc.gate_mode));
  summary["test"] = eval_json(evaluate(state.net, test, map ? &*map : nullptr, tc.gate_mode));
  summary["checkpoint"] = ckpt.string();
  write_text(out / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

// --------------------------------------------------------------- finetune

int cmd_finetune(const Config& cfg, const fs::path& out) {
  const GrcnnConfig model = cfg.model();
  const Stage stage = parse_stage(cfg.str("finetune.stage"));
  if (stage == Stage::pretrain) throw ConfigError("finetune.stage must be v1 or v2");
  TrainState state = load_matching(require_existing(cfg.str("finetune.checkpoint"), "finetune.checkpoint"), model);

  OverlayPools pools;
  if (!cfg.str("finetune.textures").empty()) {
    pools.textures = load_gray_pool(require_existing(cfg.str("finetune.textures"), "finetune.textures"));
  }
  if (!cfg.str("finetune.noise").empty()) {
    pools.noise = load_gray_pool(require_existing(cfg.str("finetune.noise"), "finetune.noise"));
  }
  check_pools(stage, pools);

  TrainConfig tc = cfg.train();
  tc.epochs = cfg.count("finetune.epochs");
  tc.lr = cfg.num("finetune.lr");
  tc.validate();
  const fs::path ckpt = out / "checkpoint.bin";
  tc.last_checkpoint = ckpt.string();
  const Dataset train = load_split(cfg, true);
  const Dataset test = load_split(cfg, false);
  const auto map = load_map(cfg);

  const Network before = state.net;
  std::ofstream log(out / "metrics.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot write '" + (out / "metrics.jsonl").string() + "'");
  finetune_stage(state, stage, train, pools, tc, map ? &*map : nullptr, [&](const TrainState& s, EpochMetrics& m) {
    m.test = evaluate(s.net, test, map ? &*map : nullptr, tc.gate_mode);
    const std::string line = to_json_line(m);
    log << line << '\n' << std::flush;
    std::cout << line << '\n' << std::flush;
  });
  save_checkpoint(state, ckpt);

  const auto changed = changed_parameters(before, state.net);
  std::set<std::string> groups;
  for (const auto& name : changed) groups.insert(name.substr(0, name.find('.')));
  const std::string allowed = stage_group(stage);
  std::vector<std::string> outside;
  for (const auto& g : groups) {
    if (g != allowed) outside.push_back(g);
  }

  std::string report = "stage\t" + to_string(stage) + "\ntrainable_group\t" + allowed + "\nchanged_groups\t";
  for (auto it = groups.begin(); it != groups.end(); ++it) report += (it == groups.begin() ? "" : ",") + *it;
  report += "\n";
  for (const auto& name : changed) report += "changed\t" + name + "\n";
  write_text(out / "diff-report.txt", report);
  std::cout << report;

  if (!outside.empty()) {
    std::cerr << "error: parameters outside " << allowed << " changed:";
    for (const auto& g : outside) std::cerr << ' ' << g;
    std::cerr << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

// -------------------------------------------------------------- gen-noise

int cmd_gen_noise(const Config& cfg, const fs::path& out) {
  const fs::path dir = require_existing(cfg.str("noise.textures"), "noise.textures");
  if (!fs::is_directory(dir)) throw IoError("noise.textures '" + dir.string() + "' is not a directory");
  const bool any = std::any_of(fs::directory_iterator(dir), fs::directory_iterator(),
                               [](const fs::directory_entry& e) { return e.is_regular_file(); });
  if (!any) throw IoError("texture directory '" + dir.string() + "' contains no files");

  const Manifest manifest = generate_texture_noise_dataset(dir, out, cfg.count("seed"));
  constexpr double kTolerance = 1e-9;
  std::string tsv = "name\tmagnitude_error\tmean_error\tstatus\n";
  std::vector<std::string> failures;
  for (const auto& e : manifest.entries) {
    std::string status;
    if (e.failed) {
      status = "FAIL";
    } else if (e.skipped) {
      status = "SKIPPED";
    } else {
      status = e.check.magnitude_error < kTolerance && e.check.mean_error < kTolerance ? "PASS" : "FAIL";
    }
    char line[512];
    std::snprintf(line, sizeof line, "%s\t%.3e\t%.3e\t%s\n", e.name.c_str(), e.check.magnitude_error,
                  e.check.mean_error, status.c_str());
    tsv += line;
    if (status == "FAIL") failures.push_back(e.name + (e.reason.empty() ? "" : " (" + e.reason + ")"));
    if (status == "SKIPPED") std::cerr << "warning: skipped " << e.name << ": " << e.reason << '\n';
  }
  write_text(out / "verification.tsv", tsv);
  std::cout << manifest.generated() << " noise images generated, " << failures.size() << " failed verification\n";
  for (const auto& f : failures) std::cerr << "verification failed: " << f << '\n';
  return failures.empty() ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------------- eval

int cmd_eval(const Config& cfg, const fs::path& out) {
  const GrcnnConfig model = cfg.model();
  const TrainState state = load_matching(require_existing(cfg.str("eval.checkpoint"), "eval.checkpoint"), model);
  const Dataset test = load_split(cfg, false);
  const auto map = load_map(cfg);
  const auto mode = parse_gate_mode(cfg.str("model.gate_mode"));
  const EvalMetrics m = evaluate(state.net, test, map ? &*map : nullptr, mode);
  auto j = eval_json(m);
  j["gate_mode"] = to_string(mode);
  write_text(out / "eval.json", j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return kExitOk;
}

// --------------------------------------------------------------- rf-probe

int cmd_rf_probe(const Config& cfg, const fs::path& out) {
  const std::string ckpt = cfg.str("probe.checkpoint");
  const GrcnnConfig model =
      ckpt.empty() ? cfg.model() : read_checkpoint_config(require_existing(ckpt, "probe.checkpoint"));
  const std::size_t size = cfg.count("probe.size");
  if (size == 0) throw ConfigError("probe.size must be positive");
  std::vector<std::size_t> steps;
  for (double t : cfg.list("probe.steps")) {
    if (t < 0 || t != std::floor(t) || t > 64) {
      throw ConfigError("probe.steps entries must be integers in [0, 64], got " + std::to_string(t));
    }
    steps.push_back(static_cast<std::size_t>(t));
  }
  if (steps.empty()) throw ConfigError("probe.steps is empty");

  const std::size_t c = size / 2;
  GrclShape shape;
  shape.in_channels = model.stem_channels[1];
  shape.channels = model.blocks.front().channels;
  shape.tie_weights = model.tie_weights;
  shape.feed_kernel = model.feed_kernel;
  shape.rec_kernel = model.rec_kernel;
  shape.gate_kernel = model.gate_kernel;

  std::string csv = "source,steps,rows,cols,count,radius\n";
  const auto row = [&](const std::string& source, const std::string& t, const SupportMap& m) {
    csv += source + "," + t + "," + std::to_string(m.extent_rows()) + "," + std::to_string(m.extent_cols()) + "," +
           std::to_string(m.count()) + "," + std::to_string(m.radius()) + "\n";
  };
  row("conv" + std::to_string(shape.rec_kernel) + "x" + std::to_string(shape.rec_kernel), "",
      receptive_field_probe(ConvSpec::same(1, 1, shape.rec_kernel), size, size, c, c));

  const double cap = static_cast<double>(size - 1) / 2.0;
  bool ok = true;
  std::optional<std::pair<std::size_t, double>> prev;
  for (std::size_t t : steps) {
    shape.steps = t;
    Rng rng(derive_seed(cfg.count("seed"), hash_name("probe"), t));
    const SupportMap m = receptive_field_probe(make_grcl(shape, rng), size, size, c, c);
    row("grcl", std::to_string(t), m);
    if (prev && t > prev->first && m.radius() <= prev->second && prev->second < cap) ok = false;
    if (m.radius() > cap) ok = false;
    prev = std::make_pair(t, m.radius());
  }
  write_text(out / "rf-probe.csv", csv);
  std::cout << csv;
  if (!ok) {
    std::cerr << "error: support radius did not grow with T before reaching the image boundary\n";
    return kExitFailure;
  }
  return kExitOk;
}

// ------------------------------------------------------------- grad-check

int cmd_grad_check(const Config& cfg, const fs::path& out, bool corrupt) {
  GradCheckOptions opts;
  opts.trials = cfg.count("gradcheck.trials");
  opts.corrupt_backward = corrupt;
  if (opts.trials == 0) throw ConfigError("gradcheck.trials must be positive");
  const GradScope scope = parse_grad_scope(cfg.str("gradcheck.scope"));
  const GradCheckReport report = grad_check(scope, cfg.count("seed"), opts);
  write_text(out / "grad-check.csv", report.to_csv());
  std::cout << report.to_csv();
  std::printf("scope=%s seed=%llu trials=%zu max_rel_error=%.3e %s\n", report.scope.c_str(),
              static_cast<unsigned long long>(report.seed), report.trials, report.max_error(),
              report.passed() ? "PASS" : "FAIL");
  return report.passed() ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated recurrent convolutional network toolkit"};
  app.require_subcommand(1);
  Options opts;
  bool corrupt = false;

  auto* train = app.add_subcommand("train", "pretrain on a dataset or the synthetic corpus");
  add_common(train, opts);
  bind(train, opts, "--epochs", "train.epochs", "number of epochs");
  bind(train, opts, "--lr", "train.lr", "base learning rate");
  bind(train, opts, "--data", "data.train_dir", "training image folder (synthetic corpus when empty)");
  bind(train, opts, "--test-data", "data.test_dir", "test image folder");
  bind(train, opts, "--checkpoint", "train.resume", "resume from this checkpoint");

  auto* finetune = app.add_subcommand("finetune", "fine-tune one GRCL block with texture/noise blending");
  add_common(finetune, opts);
  bind(finetune, opts, "--stage", "finetune.stage", "v1 or v2");
  bind(finetune, opts, "--checkpoint", "finetune.checkpoint", "base checkpoint");
  bind(finetune, opts, "--textures", "finetune.textures", "texture PNG directory");
  bind(finetune, opts, "--noise", "finetune.noise", "noise PNG directory");
  bind(finetune, opts, "--epochs", "finetune.epochs", "number of epochs");
  bind(finetune, opts, "--lr", "finetune.lr", "base learning rate");
  bind(finetune, opts, "--data", "data.train_dir", "training image folder");
  bind(finetune, opts, "--test-data", "data.test_dir", "test image folder");

  auto* gen_noise = app.add_subcommand("gen-noise", "build the texture/noise dataset");
  add_common(gen_noise, opts);
  bind(gen_noise, opts, "--textures", "noise.textures", "source texture directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, opts);
  bind(eval, opts, "--checkpoint", "eval.checkpoint", "checkpoint to evaluate");
  bind(eval, opts, "--data", "data.test_dir", "test image folder");
  bind(eval, opts, "--gate-mode", "model.gate_mode", "learned, ablated, saturated_open or saturated_closed");

  auto* rf_probe = app.add_subcommand("rf-probe", "support radius of a GRCL block versus T");
  add_common(rf_probe, opts);
  bind(rf_probe, opts, "--checkpoint", "probe.checkpoint", "take the block shape from this checkpoint");
  bind(rf_probe, opts, "--steps", "probe.steps", "comma-separated T values");
  bind(rf_probe, opts, "--size", "probe.size", "input height and width");

  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suites");
  add_common(grad, opts);
  bind(grad, opts, "--scope", "gradcheck.scope", "kernel, grcl or network");
  bind(grad, opts, "--trials", "gradcheck.trials", "random draws per suite");
  grad->add_flag("--corrupt-backward", corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    const Config cfg = resolve(opts);
    const fs::path out = opts.out;
    fs::create_directories(out);
    cfg.write(out / "resolved-config.json");
    if (train->parsed()) return cmd_train(cfg, out);
    if (finetune->parsed()) return cmd_finetune(cfg, out);
    if (gen_noise->parsed()) return cmd_gen_noise(cfg, out);
    if (eval->parsed()) return cmd_eval(cfg, out);
    if (rf_probe->parsed()) return cmd_rf_probe(cfg, out);
    return cmd_grad_check(cfg, out, corrupt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitInput;
  } catch (const IoError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ContractError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitInput;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitFailure;
  }
}
