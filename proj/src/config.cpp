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

#include "grcnn/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "grcnn/error.hpp"

namespace grcnn {

using nlohmann::json;

Config Config::defaults(const std::string& preset) {
  const GrcnnConfig model = GrcnnConfig::from_preset(preset);
  Config c;
  auto& v = c.values_;
  v["seed"] = 0;
  v["model.preset"] = preset;
  v["model.steps"] = model.blocks.front().steps;
  v["model.tie_weights"] = model.tie_weights;
  v["model.num_classes"] = model.num_classes;
  v["model.gate_mode"] = "learned";
  v["data.train_dir"] = "";
  v["data.test_dir"] = "";
  v["data.synthetic_train"] = 5000;
  v["data.synthetic_test"] = 1000;
  v["data.synthetic_seed"] = 1234;
  v["data.image_size"] = preset == "paper" ? 224 : 32;
  v["train.epochs"] = 30;
  v["train.batch_size"] = 64;
  v["train.lr"] = 0.05;
  v["train.momentum"] = 0.9;
  v["train.weight_decay"] = 1e-4;
  v["train.lr_milestones"] = json::array({0.5, 0.75});
  v["train.lr_decay"] = 0.1;
  v["train.checkpoint_every"] = 1;
  v["train.resume"] = "";
  v["augment.cutmix"] = false;
  v["augment.cutmix_prob"] = 0.5;
  v["augment.augmix"] = false;
  v["augment.augmix_width"] = 3;
  v["augment.augmix_depth"] = 3;
  v["augment.augmix_severity"] = 3.0;
  v["augment.augmix_alpha"] = 1.0;
  v["loss.w_main"] = 1.0;
  v["loss.w_js"] = 12.0;
  v["loss.w_super"] = 0.5;
  v["objectives.superclass_map"] = "";
  v["objectives.reference"] = "";
  v["finetune.stage"] = "v1";
  v["finetune.checkpoint"] = "";
  v["finetune.textures"] = "";
  v["finetune.noise"] = "";
  v["finetune.epochs"] = 5;
  v["finetune.lr"] = 0.01;
  v["finetune.p_blend"] = 0.5;
  v["finetune.alpha_min"] = 0.2;
  v["finetune.alpha_max"] = 0.6;
  v["eval.checkpoint"] = "";
  v["noise.textures"] = "";
  v["probe.checkpoint"] = "";
  v["probe.steps"] = json::array({0, 1, 2, 3});
  v["probe.size"] = 33;
  v["gradcheck.scope"] = "kernel";
  v["gradcheck.trials"] = 10;
  return c;
}

namespace {

void flatten(const json& node, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  if (node.is_object() && (prefix.empty() || !node.empty())) {
    for (const auto& [k, child] : node.items()) flatten(child, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out.emplace_back(prefix, node);
  }
}

}  // namespace

void Config::assign(const std::string& key, const json& value, const std::string& origin) {
  if (!values_.contains(key)) throw ConfigError(origin + ": unknown config key '" + key + "'");
  const json& current = values_[key];
  auto mismatch = [&](const char* expected) {
    return ConfigError(origin + ": '" + key + "' expects " + expected + ", got " + value.dump());
  };
  if (current.is_boolean()) {
    if (!value.is_boolean()) throw mismatch("true or false");
    values_[key] = value;
  } else if (current.is_number_unsigned() || current.is_number_integer()) {
    if (value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
      values_[key] = value.get<std::uint64_t>();
    } else if (value.is_number_float() && value.get<double>() >= 0 &&
               std::floor(value.get<double>()) == value.get<double>() && value.get<double>() < 1e18) {
      values_[key] = static_cast<std::uint64_t>(value.get<double>());
    } else {
      throw mismatch("a non-negative integer");
    }
  } else if (current.is_number()) {
    if (!value.is_number()) throw mismatch("a number");
    values_[key] = value.get<double>();
  } else if (current.is_string()) {
    if (!value.is_string()) throw mismatch("a string");
    values_[key] = value;
  } else if (current.is_array()) {
    if (!value.is_array()) throw mismatch("a list of numbers");
    for (const auto& e : value) {
      if (!e.is_number()) throw mismatch("a list of numbers");
    }
    values_[key] = value;
  }
}

void Config::merge(const json& object, const std::string& origin) {
  if (!object.is_object()) throw ConfigError(origin + ": config must be a JSON object");
  std::vector<std::pair<std::string, json>> flat;
  flatten(object, "", flat);
  for (const auto& [k, v] : flat) assign(k, v, origin);
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  merge(j, path.string());
}

void Config::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::set(const std::string& key, const std::string& value) {
  const std::string origin = "override " + key;
  if (!values_.contains(key)) throw ConfigError(origin + ": unknown config key '" + key + "'");
  const json& current = values_[key];
  if (current.is_string()) {
    assign(key, value, origin);
    return;
  }
  if (current.is_array() && !value.starts_with("[")) {
    json list = json::array();
    std::istringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        std::size_t used = 0;
        const double d = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
        list.push_back(d);
      } catch (const std::exception&) {
        throw ConfigError(origin + ": '" + item + "' is not a number");
      }
    }
    assign(key, list, origin);
    return;
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    throw ConfigError(origin + ": cannot parse '" + value + "'");
  }
  assign(key, parsed, origin);
}

const json& Config::at(const std::string& key) const {
  if (!values_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  return values_.at(key);
}

std::string Config::str(const std::string& key) const { return at(key).get<std::string>(); }
double Config::num(const std::string& key) const { return at(key).get<double>(); }
std::uint64_t Config::count(const std::string& key) const { return at(key).get<std::uint64_t>(); }
bool Config::flag(const std::string& key) const { return at(key).get<bool>(); }
std::vector<double> Config::list(const std::string& key) const { return at(key).get<std::vector<double>>(); }

void Config::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << values_.dump(2) << '\n';
}

GrcnnConfig Config::model() const {
  GrcnnConfig m = GrcnnConfig::from_preset(str("model.preset"));
  for (auto& b : m.blocks) b.steps = count("model.steps");
  m.tie_weights = flag("model.tie_weights");
  m.num_classes = count("model.num_classes");
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return m;
}

AugmixConfig Config::augmix() const {
  AugmixConfig a;
  a.width = count("augment.augmix_width");
  a.max_depth = count("augment.augmix_depth");
  a.severity = num("augment.augmix_severity");
  a.dirichlet_alpha = num("augment.augmix_alpha");
  a.beta_alpha = num("augment.augmix_alpha");
  try {
    a.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return a;
}

TrainConfig Config::train() const {
  TrainConfig t;
  t.epochs = count("train.epochs");
  t.batch_size = count("train.batch_size");
  t.seed = count("seed");
  t.lr = num("train.lr");
  t.momentum = num("train.momentum");
  t.weight_decay = num("train.weight_decay");
  t.lr_milestones = list("train.lr_milestones");
  t.lr_decay = num("train.lr_decay");
  t.weights = {num("loss.w_main"), num("loss.w_js"), num("loss.w_super")};
  t.cutmix = flag("augment.cutmix");
  t.cutmix_prob = num("augment.cutmix_prob");
  t.augmix = flag("augment.augmix");
  t.augmix_config = augmix();
  t.p_blend = num("finetune.p_blend");
  t.alpha_min = num("finetune.alpha_min");
  t.alpha_max = num("finetune.alpha_max");
  try {
    t.gate_mode = parse_gate_mode(str("model.gate_mode"));
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  t.validate();
  return t;
}

std::string preset_in_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (j.contains("model.preset") && j["model.preset"].is_string()) return j["model.preset"];
  if (j.contains("model") && j["model"].is_object() && j["model"].contains("preset") &&
      j["model"]["preset"].is_string()) {
    return j["model"]["preset"];
  }
  return "";
}

}  // namespace grcnn
