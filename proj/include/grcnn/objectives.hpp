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

// Composite training objective: classification cross-entropy, Jensen-Shannon
// consistency across clean/augmented predictions, and a cross-entropy between
// superclass-projected predictions and a human reference distribution.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "grcnn/kernels.hpp"
#include "grcnn/tensor.hpp"

namespace grcnn {

inline constexpr std::size_t kSuperclassCount = 11;
inline constexpr int kUnmapped = -1;
inline constexpr double kLogFloor = 1e-12;

struct SuperclassMap {
  std::vector<int> class_to_super;  // entries in [0, 11) or kUnmapped
  /// Row s: human superclass distribution when the true superclass is s.
  std::vector<std::vector<double>> reference;

  [[nodiscard]] std::size_t class_count() const { return class_to_super.size(); }
  /// Every superclass has at least one member class.
  [[nodiscard]] bool complete() const;
  [[nodiscard]] std::vector<std::size_t> superclass_sizes() const;
  /// Throws ContractError when entries are out of range or reference rows
  /// are not distributions.
  void validate() const;

  /// Lines "class_index<TAB>superclass_index" (superclass -1 = unmapped).
  static SuperclassMap load(const std::filesystem::path& map_file,
                            const std::filesystem::path& reference_file);
  /// 20 classes: class k maps to superclass k mod 11 for k < 19 and class 19
  /// is unmapped. The reference puts 0.8 on the true superclass and spreads
  /// 0.2 evenly over the other ten.
  static SuperclassMap toy20();
};

struct LossWeights {
  double main = 1.0;
  double js = 12.0;
  double super = 0.5;
};

struct JsResult {
  double loss = 0.0;
  Tensor d_clean, d_aug1, d_aug2;  // gradients w.r.t. the probabilities
};

/// mean_n (KL(p0||m) + KL(p1||m) + KL(p2||m)) / 3 with m the average of the
/// three, 0 log 0 := 0 and log arguments floored at 1e-12.
JsResult js_consistency(const Tensor& p_clean, const Tensor& p_aug1, const Tensor& p_aug2);

/// Per-superclass mass renormalized over mapped classes; uniform when the
/// mapped mass is below 1e-9.
std::vector<double> superclass_project(std::span<const double> probs, const SuperclassMap& map);
/// Row-wise projection of an (N, K) batch into (N, 11, 1, 1).
Tensor superclass_project(const Tensor& probs, const SuperclassMap& map);
/// Vector-Jacobian product of the batched projection.
Tensor superclass_project_backward(const Tensor& probs, const SuperclassMap& map,
                                   const Tensor& d_projected);

struct SuperLossResult {
  double loss = 0.0;
  Tensor d_projected;
};

/// mean_n -sum ref log max(projected, 1e-12) over rows with a non-empty
/// reference (all-zero reference rows are skipped).
SuperLossResult superclass_loss(const Tensor& projected, const Tensor& reference);

/// Reference row per sample: sum_k y_k R[super(k)] renormalized over mapped
/// classes; all zeros when the label has no mapped mass.
Tensor superclass_targets(const Tensor& soft_labels, const SuperclassMap& map);

struct TotalLoss {
  double total = 0.0;
  double ce = 0.0;
  double js = 0.0;
  double super = 0.0;
  Tensor d_logits;       // clean logits
  Tensor d_logits_aug1;  // empty unless augmented logits were supplied
  Tensor d_logits_aug2;
};

/// w_main CE(clean) + w_js JS(clean, aug1, aug2) + w_super SuperCE(clean).
/// The JS term needs both augmented logits; the superclass term needs a map.
TotalLoss total_loss(const Tensor& logits, const Tensor& soft_labels, const Tensor* logits_aug1,
                     const Tensor* logits_aug2, const SuperclassMap* map, const LossWeights& w);

}  // namespace grcnn
