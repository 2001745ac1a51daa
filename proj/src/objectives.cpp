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

#include "grcnn/objectives.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "grcnn/error.hpp"

namespace grcnn {

// ------------------------------------------------------------ superclasses

bool SuperclassMap::complete() const {
  const auto sizes = superclass_sizes();
  return std::all_of(sizes.begin(), sizes.end(), [](std::size_t n) { return n > 0; });
}

std::vector<std::size_t> SuperclassMap::superclass_sizes() const {
  std::vector<std::size_t> sizes(kSuperclassCount, 0);
  for (int s : class_to_super) {
    if (s != kUnmapped) ++sizes[static_cast<std::size_t>(s)];
  }
  return sizes;
}

void SuperclassMap::validate() const {
  for (std::size_t k = 0; k < class_to_super.size(); ++k) {
    const int s = class_to_super[k];
    if (s != kUnmapped && (s < 0 || s >= static_cast<int>(kSuperclassCount))) {
      throw ContractError("superclass map: class " + std::to_string(k) + " maps to invalid superclass " +
                          std::to_string(s));
    }
  }
  if (reference.empty()) return;
  if (reference.size() != kSuperclassCount) {
    throw ContractError("superclass reference: expected 11 rows, got " + std::to_string(reference.size()));
  }
  for (std::size_t r = 0; r < reference.size(); ++r) {
    const auto& row = reference[r];
    if (row.size() != kSuperclassCount) {
      throw ContractError("superclass reference: row " + std::to_string(r) + " needs 11 columns");
    }
    double total = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw ContractError("superclass reference: row " + std::to_string(r) + " has a negative entry");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ContractError("superclass reference: row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

SuperclassMap SuperclassMap::load(const std::filesystem::path& map_file,
                                  const std::filesystem::path& reference_file) {
  SuperclassMap m;
  std::ifstream in(map_file);
  if (!in) throw IoError("cannot read superclass map '" + map_file.string() + "'");
  std::string line;
  std::vector<std::pair<long, int>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long cls = 0;
    int super = 0;
    if (!(ls >> cls >> super)) throw ConfigError("superclass map: malformed line '" + line + "'");
    rows.emplace_back(cls, super);
  }
  m.class_to_super.assign(rows.size(), kUnmapped);
  std::vector<bool> seen(rows.size(), false);
  for (const auto& [cls, super] : rows) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= rows.size() || seen[static_cast<std::size_t>(cls)]) {
      throw ConfigError("superclass map: class indices must be 0..K-1 without repeats");
    }
    seen[static_cast<std::size_t>(cls)] = true;
    m.class_to_super[static_cast<std::size_t>(cls)] = super;
  }
  if (!reference_file.empty()) {
    std::ifstream rin(reference_file);
    if (!rin) throw IoError("cannot read superclass reference '" + reference_file.string() + "'");
    while (std::getline(rin, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::vector<double> row;
      double v = 0.0;
      while (ls >> v) row.push_back(v);
      m.reference.push_back(std::move(row));
    }
  }
  m.validate();
  return m;
}

SuperclassMap SuperclassMap::toy20() {
  SuperclassMap m;
  for (int k = 0; k < 20; ++k) m.class_to_super.push_back(k < 19 ? k % 11 : kUnmapped);
  for (std::size_t s = 0; s < kSuperclassCount; ++s) {
    std::vector<double> row(kSuperclassCount, 0.02);
    row[s] = 0.8;
    m.reference.push_back(std::move(row));
  }
  return m;
}

std::vector<double> superclass_project(std::span<const double> probs, const SuperclassMap& map) {
  if (probs.size() != map.class_count()) {
    throw ContractError("superclass_project: " + std::to_string(probs.size()) +
                        " probabilities for a map of " + std::to_string(map.class_count()) + " classes");
  }
  std::vector<double> q(kSuperclassCount, 0.0);
  double mapped = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const int s = map.class_to_super[k];
    if (s == kUnmapped) continue;
    q[static_cast<std::size_t>(s)] += probs[k];
    mapped += probs[k];
  }
  if (mapped < 1e-9) return std::vector<double>(kSuperclassCount, 1.0 / kSuperclassCount);
  for (auto& v : q) v /= mapped;
  return q;
}

Tensor superclass_project(const Tensor& probs, const SuperclassMap& map) {
  const std::size_t n = probs.shape().n;
  const std::size_t k = probs.shape().sample();
  Tensor out({n, kSuperclassCount, 1, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = superclass_project(probs.values().subspan(i * k, k), map);
    std::copy(q.begin(), q.end(), out.data() + i * kSuperclassCount);
  }
  return out;
}

Tensor superclass_project_backward(const Tensor& probs, const SuperclassMap& map,
                                   const Tensor& d_projected) {
  const std::size_t n = probs.shape().n;
  const std::size_t k = probs.shape().sample();
  Tensor d(probs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = probs.values().subspan(i * k, k);
    double mapped = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (map.class_to_super[j] != kUnmapped) mapped += row[j];
    }
    if (mapped < 1e-9) continue;
    const auto q = superclass_project(row, map);
    double dot = 0.0;
    for (std::size_t s = 0; s < kSuperclassCount; ++s) dot += d_projected[i * kSuperclassCount + s] * q[s];
    for (std::size_t j = 0; j < k; ++j) {
      const int s = map.class_to_super[j];
      if (s == kUnmapped) continue;
      d[i * k + j] = (d_projected[i * kSuperclassCount + static_cast<std::size_t>(s)] - dot) / mapped;
    }
  }
  return d;
}

Tensor superclass_targets(const Tensor& soft_labels, const SuperclassMap& map) {
  if (map.reference.size() != kSuperclassCount) {
    throw ContractError("superclass_targets: map has no reference distribution");
  }
  const std::size_t n = soft_labels.shape().n;
  const std::size_t k = soft_labels.shape().sample();
  if (k != map.class_count()) throw ContractError("superclass_targets: label width != map classes");
  Tensor t({n, kSuperclassCount, 1, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double mapped = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const int s = map.class_to_super[j];
      const double y = soft_labels[i * k + j];
      if (s == kUnmapped || y == 0.0) continue;
      mapped += y;
      for (std::size_t r = 0; r < kSuperclassCount; ++r) {
        t[i * kSuperclassCount + r] += y * map.reference[static_cast<std::size_t>(s)][r];
      }
    }
    if (mapped > 0.0) {
      for (std::size_t r = 0; r < kSuperclassCount; ++r) t[i * kSuperclassCount + r] /= mapped;
    }
  }
  return t;
}

SuperLossResult superclass_loss(const Tensor& projected, const Tensor& reference) {
  if (projected.shape() != reference.shape()) {
    throw ContractError("superclass_loss: shape mismatch " + projected.shape().str() + " vs " +
                        reference.shape().str());
  }
  validate_distribution_rows(projected, "superclass_loss projected");
  const std::size_t n = projected.shape().n;
  const std::size_t k = projected.shape().sample();
  std::vector<bool> active(n, false);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = reference[i * k + j];
      if (!(v >= 0.0)) throw ContractError("superclass_loss: reference row " + std::to_string(i) + " has a negative entry");
      total += v;
    }
    if (total == 0.0) continue;
    if (std::abs(total - 1.0) > 1e-9) {
      throw ContractError("superclass_loss: reference row " + std::to_string(i) + " does not sum to 1");
    }
    active[i] = true;
    ++count;
  }
  SuperLossResult r{0.0, Tensor(projected.shape())};
  if (count == 0) return r;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    for (std::size_t j = 0; j < k; ++j) {
      const double ref = reference[i * k + j];
      const double q = projected[i * k + j];
      if (ref == 0.0) continue;
      r.loss -= ref * std::log(std::max(q, kLogFloor)) * inv;
      if (q > kLogFloor) r.d_projected[i * k + j] = -ref / q * inv;
    }
  }
  return r;
}

// ---------------------------------------------------------------------- JS

JsResult js_consistency(const Tensor& p_clean, const Tensor& p_aug1, const Tensor& p_aug2) {
  if (p_clean.shape() != p_aug1.shape() || p_clean.shape() != p_aug2.shape()) {
    throw ContractError("js_consistency: the three distributions must share a shape");
  }
  validate_distribution_rows(p_clean, "js_consistency p_clean");
  validate_distribution_rows(p_aug1, "js_consistency p_aug1");
  validate_distribution_rows(p_aug2, "js_consistency p_aug2");
  const std::size_t n = p_clean.shape().n;
  const std::size_t k = p_clean.shape().sample();
  if (n == 0) throw ContractError("js_consistency: empty batch");
  JsResult r{0.0, Tensor(p_clean.shape()), Tensor(p_clean.shape()), Tensor(p_clean.shape())};
  const std::array<const Tensor*, 3> ps{&p_clean, &p_aug1, &p_aug2};
  const std::array<Tensor*, 3> ds{&r.d_clean, &r.d_aug1, &r.d_aug2};
  const double scale = 1.0 / (3.0 * static_cast<double>(n));
  for (std::size_t idx = 0; idx < n * k; ++idx) {
    const double a = (*ps[0])[idx];
    const double m = a + (((*ps[1])[idx] - a) + ((*ps[2])[idx] - a)) / 3.0;
    const double log_m = std::log(std::max(m, kLogFloor));
    for (std::size_t i = 0; i < 3; ++i) {
      const double p = (*ps[i])[idx];
      const double log_p = std::log(std::max(p, kLogFloor));
      if (p > 0.0) r.loss += p * (log_p - log_m) * scale;
      (*ds[i])[idx] = (log_p - log_m) * scale;
    }
  }
  return r;
}

// ------------------------------------------------------------------- total

TotalLoss total_loss(const Tensor& logits, const Tensor& soft_labels, const Tensor* logits_aug1,
                     const Tensor* logits_aug2, const SuperclassMap* map, const LossWeights& w) {
  for (double v : {w.main, w.js, w.super}) {
    if (!(v >= 0.0)) throw ContractError("total_loss: loss weights must be non-negative");
  }
  TotalLoss out;
  auto ce = softmax_cross_entropy(logits, soft_labels);
  out.ce = ce.loss;
  out.d_logits = std::move(ce.d_logits);
  for (auto& v : out.d_logits.values()) v *= w.main;

  const Tensor probs = softmax(logits);
  if (logits_aug1 != nullptr && logits_aug2 != nullptr) {
    const Tensor p1 = softmax(*logits_aug1);
    const Tensor p2 = softmax(*logits_aug2);
    auto js = js_consistency(probs, p1, p2);
    out.js = js.loss;
    auto scaled = [&](Tensor t) {
      for (auto& v : t.values()) v *= w.js;
      return t;
    };
    add_inplace(out.d_logits, softmax_backward(probs, scaled(std::move(js.d_clean))));
    out.d_logits_aug1 = softmax_backward(p1, scaled(std::move(js.d_aug1)));
    out.d_logits_aug2 = softmax_backward(p2, scaled(std::move(js.d_aug2)));
  }

  if (map != nullptr) {
    const Tensor projected = superclass_project(probs, *map);
    const Tensor targets = superclass_targets(soft_labels, *map);
    auto sl = superclass_loss(projected, targets);
    out.super = sl.loss;
    for (auto& v : sl.d_projected.values()) v *= w.super;
    const Tensor d_probs = superclass_project_backward(probs, *map, sl.d_projected);
    add_inplace(out.d_logits, softmax_backward(probs, d_probs));
  }
  out.total = w.main * out.ce + w.js * out.js + w.super * out.super;
  return out;
}

}  // namespace grcnn
