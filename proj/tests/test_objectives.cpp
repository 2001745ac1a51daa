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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "grcnn/error.hpp"
#include "grcnn/objectives.hpp"
#include "oracles.hpp"

using namespace grcnn;
namespace fs = std::filesystem;

namespace {

Tensor rows_of(const std::vector<std::vector<double>>& rows) {
  Tensor t({rows.size(), rows[0].size(), 1, 1});
  for (std::size_t n = 0; n < rows.size(); ++n)
    for (std::size_t k = 0; k < rows[n].size(); ++k) t.at(n, k, 0, 0) = rows[n][k];
  return t;
}

std::vector<double> row(const Tensor& t, std::size_t n) {
  const std::size_t k = t.shape().sample();
  return {t.data() + n * k, t.data() + (n + 1) * k};
}

Tensor random_probs(std::size_t n, std::size_t k, Rng& rng) {
  Tensor t({n, k, 1, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = sample_dirichlet(k, 1.0, rng);
    std::copy(d.begin(), d.end(), t.data() + i * k);
  }
  return t;
}

SuperclassMap even22() {
  SuperclassMap m = SuperclassMap::toy20();
  m.class_to_super.resize(22);
  for (std::size_t k = 0; k < 22; ++k) m.class_to_super[k] = static_cast<int>(k % 11);
  return m;
}

}  // namespace

TEST_CASE("JS matches the term-by-term sum") {
  const Tensor p1 = rows_of({{0.7, 0.2, 0.1}, {0.0, 0.5, 0.5}});
  const Tensor p2 = rows_of({{0.1, 0.8, 0.1}, {0.3, 0.3, 0.4}});
  const Tensor p3 = rows_of({{0.2, 0.2, 0.6}, {1.0, 0.0, 0.0}});
  double want = 0.0;
  for (std::size_t n = 0; n < 2; ++n) want += oracle::js3(row(p1, n), row(p2, n), row(p3, n));
  CHECK(js_consistency(p1, p2, p3).loss == doctest::Approx(want / 2.0).epsilon(1e-14));
}

TEST_CASE("JS properties on random triples") {
  Rng rng(1);
  const Tensor p = random_probs(8, 10, rng);
  CHECK(js_consistency(p, p, p).loss == 0.0);
  for (int i = 0; i < 200; ++i) {
    const Tensor a = random_probs(4, 10, rng), b = random_probs(4, 10, rng), c = random_probs(4, 10, rng);
    const double js = js_consistency(a, b, c).loss;
    CHECK(js >= 0.0);
    CHECK(js <= std::log(3.0));
    CHECK(std::abs(js_consistency(c, a, b).loss - js) < 1e-12);
    CHECK(std::abs(js_consistency(b, c, a).loss - js) < 1e-12);
  }
  Tensor one_hots({3, 3, 1, 1});
  Tensor e0({1, 3, 1, 1}, {1, 0, 0}), e1({1, 3, 1, 1}, {0, 1, 0}), e2({1, 3, 1, 1}, {0, 0, 1});
  CHECK(js_consistency(e0, e1, e2).loss == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  CHECK_THROWS_AS(js_consistency(e0, e1, Tensor({1, 3, 1, 1}, 0.5)), ContractError);
}

TEST_CASE("JS gradient through softmax matches finite differences") {
  Rng rng(2);
  Tensor z1 = oracle::random_tensor({3, 5, 1, 1}, rng, -2, 2);
  const Tensor z2 = oracle::random_tensor({3, 5, 1, 1}, rng, -2, 2);
  const Tensor z3 = oracle::random_tensor({3, 5, 1, 1}, rng, -2, 2);
  const Tensor p1 = softmax(z1);
  const auto js = js_consistency(p1, softmax(z2), softmax(z3));
  const Tensor dz = softmax_backward(p1, js.d_clean);
  const auto fd = finite_difference_gradient(
      [&](std::span<const double> v) {
        return js_consistency(softmax(Tensor(z1.shape(), {v.begin(), v.end()})), softmax(z2), softmax(z3)).loss;
      },
      z1.values(), 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(dz[i] == doctest::Approx(fd[i]).epsilon(1e-7).scale(1e-6));
}

TEST_CASE("toy superclass map counts") {
  const auto m = SuperclassMap::toy20();
  CHECK(m.class_count() == 20);
  CHECK(m.complete());
  auto partial = m;
  partial.class_to_super[10] = kUnmapped;
  CHECK_FALSE(partial.complete());
  CHECK(m.class_to_super[19] == kUnmapped);
  CHECK(m.class_to_super[12] == 1);
  const std::vector<std::size_t> sizes = {2, 2, 2, 2, 2, 2, 2, 2, 1, 1, 1};
  CHECK(m.superclass_sizes() == sizes);
  CHECK(m.reference[3][3] == 0.8);
  CHECK(even22().complete());
}

TEST_CASE("superclass projection conserves mass") {
  Rng rng(3);
  const auto m = SuperclassMap::toy20();
  const Tensor uniform({1, 20, 1, 1}, 0.05);
  const auto q = superclass_project(uniform.values(), m);
  CHECK(q[0] == doctest::Approx(2.0 / 19.0).epsilon(1e-15));
  CHECK(q[10] == doctest::Approx(1.0 / 19.0).epsilon(1e-15));
  for (int i = 0; i < 100; ++i) {
    const Tensor p = random_probs(5, 20, rng);
    const Tensor proj = superclass_project(p, m);
    for (std::size_t n = 0; n < 5; ++n) {
      const auto r = row(proj, n);
      double s = 0.0;
      for (double v : r) s += v;
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
  Tensor only_unmapped({1, 20, 1, 1});
  only_unmapped[19] = 1.0;
  const auto fallback = superclass_project(only_unmapped.values(), m);
  for (double v : fallback) CHECK(v == doctest::Approx(1.0 / 11.0));
}

TEST_CASE("projection backward matches finite differences") {
  Rng rng(4);
  const auto m = SuperclassMap::toy20();
  const Tensor p = random_probs(2, 20, rng);
  const Tensor r = oracle::random_tensor({2, 11, 1, 1}, rng);
  const Tensor d = superclass_project_backward(p, m, r);
  const auto fd = finite_difference_gradient(
      [&](std::span<const double> v) {
        Tensor q(p.shape(), {v.begin(), v.end()});
        double acc = 0.0;
        for (std::size_t n = 0; n < 2; ++n) {
          const auto proj = superclass_project(std::span<const double>(q.data() + 20 * n, 20), m);
          for (std::size_t s = 0; s < 11; ++s) acc += proj[s] * r.at(n, s, 0, 0);
        }
        return acc;
      },
      p.values(), 1e-6);
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(d[i] == doctest::Approx(fd[i]).epsilon(1e-6).scale(1e-6));
}

TEST_CASE("uniform predictions reproduce ln 10 and ln 11") {
  const Tensor z({4, 10, 1, 1}, 0.3);
  Tensor y({4, 10, 1, 1});
  for (std::size_t n = 0; n < 4; ++n) y.at(n, (3 * n) % 10, 0, 0) = 1.0;
  CHECK(std::abs(softmax_cross_entropy(z, y).loss - std::log(10.0)) < 1e-9);

  const auto m = even22();
  Tensor labels({3, 22, 1, 1});
  for (std::size_t n = 0; n < 3; ++n) labels.at(n, 5 * n + 1, 0, 0) = 1.0;
  const Tensor projected = superclass_project(softmax(Tensor({3, 22, 1, 1}, -1.0)), m);
  const auto sl = superclass_loss(projected, superclass_targets(labels, m));
  CHECK(std::abs(sl.loss - std::log(11.0)) < 1e-9);
}

TEST_CASE("superclass targets") {
  const auto m = SuperclassMap::toy20();
  Tensor labels({3, 20, 1, 1});
  labels.at(0, 13, 0, 0) = 1.0;  // superclass 2
  labels.at(1, 0, 0, 0) = 0.5;
  labels.at(1, 19, 0, 0) = 0.5;  // unmapped half
  labels.at(2, 19, 0, 0) = 1.0;  // nothing mapped
  const Tensor t = superclass_targets(labels, m);
  CHECK(row(t, 0) == m.reference[2]);
  CHECK(row(t, 1) == m.reference[0]);
  for (double v : row(t, 2)) CHECK(v == 0.0);
  const auto sl = superclass_loss(superclass_project(Tensor(labels.shape(), 0.05), m), t);
  const Tensor q = superclass_project(Tensor(labels.shape(), 0.05), m);
  double want = 0.0;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t s = 0; s < 11; ++s) want -= t.at(n, s, 0, 0) * std::log(q.at(n, s, 0, 0));
  CHECK(sl.loss == doctest::Approx(want / 2.0).epsilon(1e-14));
}

TEST_CASE("total loss equals its weighted parts and its gradient is exact") {
  Rng rng(5);
  const auto m = SuperclassMap::toy20();
  Tensor z = oracle::random_tensor({2, 20, 1, 1}, rng, -1, 1);
  Tensor z1 = oracle::random_tensor({2, 20, 1, 1}, rng, -1, 1);
  const Tensor z2 = oracle::random_tensor({2, 20, 1, 1}, rng, -1, 1);
  const Tensor y = random_probs(2, 20, rng);
  const LossWeights w{1.0, 12.0, 0.5};
  const auto tl = total_loss(z, y, &z1, &z2, &m, w);
  const double ce = softmax_cross_entropy(z, y).loss;
  const double js = js_consistency(softmax(z), softmax(z1), softmax(z2)).loss;
  const double sup = superclass_loss(superclass_project(softmax(z), m), superclass_targets(y, m)).loss;
  CHECK(tl.ce == ce);
  CHECK(tl.js == js);
  CHECK(tl.super == sup);
  CHECK(tl.total == doctest::Approx(ce + 12.0 * js + 0.5 * sup).epsilon(1e-15));

  auto eval_clean = [&](std::span<const double> v) {
    return total_loss(Tensor(z.shape(), {v.begin(), v.end()}), y, &z1, &z2, &m, w).total;
  };
  const auto fd = finite_difference_gradient(eval_clean, z.values(), 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    CHECK(tl.d_logits[i] == doctest::Approx(fd[i]).epsilon(1e-6).scale(1e-5));
  }
  auto eval_aug = [&](std::span<const double> v) {
    const Tensor a(z1.shape(), {v.begin(), v.end()});
    return total_loss(z, y, &a, &z2, &m, w).total;
  };
  const auto fd1 = finite_difference_gradient(eval_aug, z1.values(), 1e-5);
  for (std::size_t i = 0; i < fd1.size(); ++i) {
    CHECK(tl.d_logits_aug1[i] == doctest::Approx(fd1[i]).epsilon(1e-6).scale(1e-5));
  }
  const auto plain = total_loss(z, y, nullptr, nullptr, nullptr, w);
  CHECK(plain.total == ce);
  CHECK(plain.d_logits_aug1.empty());
  CHECK_THROWS_AS(total_loss(z, y, nullptr, nullptr, nullptr, {1.0, -1.0, 0.0}), ContractError);
}

TEST_CASE("superclass map files") {
  const fs::path dir = fs::temp_directory_path() / "grcnn_test_maps";
  fs::create_directories(dir);
  {
    std::ofstream map(dir / "map.txt");
    map << "# class super\n";
    for (int k = 0; k < 12; ++k) map << k << ' ' << (k < 11 ? k : -1) << '\n';
    std::ofstream ref(dir / "ref.txt");
    for (int s = 0; s < 11; ++s) {
      for (int t = 0; t < 11; ++t) ref << (s == t ? 0.9 : 0.01) << ' ';
      ref << '\n';
    }
    std::ofstream gap(dir / "gap.txt");
    gap << "0 1\n2 3\n";
    std::ofstream bad(dir / "bad_ref.txt");
    bad << "0.5 0.5\n";
  }
  const auto m = SuperclassMap::load(dir / "map.txt", dir / "ref.txt");
  CHECK(m.class_count() == 12);
  CHECK(m.class_to_super[11] == kUnmapped);
  CHECK(m.reference[4][4] == 0.9);
  CHECK_THROWS_AS(SuperclassMap::load(dir / "gap.txt", dir / "ref.txt"), ConfigError);
  CHECK_THROWS_AS(SuperclassMap::load(dir / "map.txt", dir / "bad_ref.txt"), ContractError);
  CHECK_THROWS_AS(SuperclassMap::load(dir / "none.txt", dir / "ref.txt"), IoError);
  fs::remove_all(dir);
}
