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

// Receptive-field probe: the set of input pixels with a nonzero gradient for
// one output activation. Probes run on a surrogate copy of the model whose
// conv weights are all positive (1 / fan_in), whose batch norms are identity
// maps in eval mode, and whose input is all ones. Every pre-activation is then
// positive, so ReLUs act linearly and no gradient cancels by accident.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "grcnn/network.hpp"

namespace grcnn {

struct SupportMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> mask;  // 1 where the input pixel influences the output

  [[nodiscard]] bool at(std::size_t y, std::size_t x) const { return mask[y * cols + x] != 0; }
  [[nodiscard]] std::size_t count() const;
  /// Bounding-box height and width of the support.
  [[nodiscard]] std::size_t extent_rows() const;
  [[nodiscard]] std::size_t extent_cols() const;
  /// (max(extent) - 1) / 2: 1 for a single 3x3 kernel.
  [[nodiscard]] double radius() const;
  /// True when every pixel of `other` is also in this support.
  [[nodiscard]] bool contains(const SupportMap& other) const;
};

SupportMap receptive_field_probe(const ConvSpec& conv, std::size_t height, std::size_t width,
                                 std::size_t y, std::size_t x);
SupportMap receptive_field_probe(const GrclParams& block, std::size_t height, std::size_t width,
                                 std::size_t y, std::size_t x);
/// Probes the output of the first `layer_count` layers of `net`.
SupportMap receptive_field_probe(const Network& net, std::size_t layer_count, std::size_t height,
                                 std::size_t width, std::size_t y, std::size_t x);

}  // namespace grcnn
