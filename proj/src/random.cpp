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

#include "grcnn/random.hpp"

namespace grcnn {

double sample_beta(double alpha, double beta, Rng& rng) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> w(k);
  double total = 0.0;
  for (auto& v : w) {
    v = g(rng);
    total += v;
  }
  for (auto& v : w) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(k);
  return w;
}

}  // namespace grcnn
