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

// In-memory labeled image sets: the bundled synthetic shape corpus, a
// two-class toy set, and directory-per-class PNG folders.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "grcnn/tensor.hpp"

namespace grcnn {

struct Dataset {
  Tensor images;  // (N, C, H, W) in [0, 1]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] bool empty() const { return labels.empty(); }

  /// Gathers the given sample indices into one batch.
  [[nodiscard]] Tensor batch(std::span<const std::size_t> indices) const;
  /// One-hot rows (N, K, 1, 1) for the given indices.
  [[nodiscard]] Tensor one_hot(std::span<const std::size_t> indices) const;
  void validate() const;
};

inline constexpr std::size_t kSyntheticClasses = 10;

/// Colored shapes (disc, square, triangle, plus, ring, diamond, cross,
/// horizontal bar, vertical bar, two dots) at random positions, sizes and
/// colors over textured backgrounds. Sample i depends only on (seed, i), and
/// labels cycle through the classes so every split is balanced.
Dataset make_synthetic(std::size_t count, std::size_t image_size, std::uint64_t seed);

/// Two classes told apart by mean brightness; linearly separable.
Dataset make_separable_toy(std::size_t count, std::size_t image_size, std::uint64_t seed);

/// Loads <root>/<class>/*.png with classes in sorted directory order. Every
/// image must be image_size x image_size; gray images are replicated to RGB.
Dataset load_image_folder(const std::filesystem::path& root, std::size_t image_size);

/// Writes the dataset as a directory-per-class PNG tree. Directories are
/// named "<index>_<class>" so that load_image_folder keeps the label order.
void write_image_folder(const Dataset& data, const std::filesystem::path& root);

}  // namespace grcnn
