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

// Finite-difference verification suites shared by the CLI and the tests.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace grcnn {

enum class GradScope { kernel, grcl, network };

GradScope parse_grad_scope(const std::string& name);
std::string to_string(GradScope scope);

/// |a - n| / max(|a|, |n|, kRelErrorFloor, floor). The suites pass
/// floor = kTensorScaleFraction * (largest numeric entry of the same tensor),
/// so an entry that is tiny through cancellation is judged on the tensor's
/// scale instead of dividing truncation error by itself.
inline constexpr double kRelErrorFloor = 1e-6;
inline constexpr double kTensorScaleFraction = 1e-3;
double relative_error(double analytic, double numeric, double floor = 0.0);

struct GradCheckOptions {
  std::size_t trials = 10;  // independent random draws per suite
  double eps = 1e-4;
  /// Coordinates sampled per parameter tensor in the network scope.
  std::size_t coords_per_tensor = 4;
  /// Scales every analytic gradient by 1.01 before comparison; a negative
  /// control that must make the check fail.
  bool corrupt_backward = false;
};

struct GradCheckEntry {
  std::string group;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +eps and -eps evaluations fell on different sides of
  /// a ReLU kink; central differences are undefined there.
  std::size_t skipped = 0;
  double tolerance = 0.0;

  [[nodiscard]] bool passed() const { return checked > 0 && max_rel_error < tolerance; }
};

struct GradCheckReport {
  std::string scope;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::vector<GradCheckEntry> entries;

  [[nodiscard]] bool passed() const;
  [[nodiscard]] double max_error() const;
  /// group,max_rel_error,checked,skipped,tolerance,status
  [[nodiscard]] std::string to_csv() const;
};

/// Tolerances: 1e-5 for kernels and the GRCL block, 1e-4 for the network.
GradCheckReport grad_check(GradScope scope, std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace grcnn
