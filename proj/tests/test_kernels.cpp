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
#include <numbers>

#include "grcnn/error.hpp"
#include "grcnn/fft.hpp"
#include "grcnn/gradcheck.hpp"
#include "grcnn/kernels.hpp"
#include "grcnn/tensor.hpp"
#include "oracles.hpp"

using namespace grcnn;

TEST_CASE("tensor indexing, slicing and concatenation") {
  Tensor t({2, 3, 4, 5});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  CHECK(t.at(1, 2, 3, 4) == 119.0);
  CHECK(t.offset(1, 0, 0, 0) == 60);
  const Tensor s = t.slice(1, 1);
  CHECK(s.shape() == Shape{1, 3, 4, 5});
  CHECK(s[0] == 60.0);
  const Tensor parts[] = {t.slice(0, 1), t.slice(1, 1)};
  CHECK(bitwise_equal(concat_batch(parts), t));
  CHECK_THROWS_AS(Tensor({1, 1, 2, 2}, std::vector<double>(3)), ContractError);
  CHECK_THROWS_AS(static_cast<void>(t.slice(2, 1)), ContractError);
}

TEST_CASE("bitwise_equal distinguishes signed zeros") {
  CHECK_FALSE(bitwise_equal(Tensor({1, 1, 1, 1}, 0.0), Tensor({1, 1, 1, 1}, -0.0)));
  CHECK(bitwise_equal(Tensor({1, 1, 1, 1}, 2.5), Tensor({1, 1, 1, 1}, 2.5)));
}

TEST_CASE("conv2d hand values") {
  Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w({1, 1, 3, 3}, 1.0);
  const Tensor y = conv2d(x, w, {}, ConvSpec::same(1, 1, 3));
  CHECK(y.at(0, 0, 1, 1) == 45.0);
  CHECK(y.at(0, 0, 0, 0) == 12.0);
  CHECK(y.at(0, 0, 2, 2) == 28.0);
  const std::vector<double> bias = {0.5};
  const ConvSpec strided{1, 1, 3, 3, 2, 2, 1, 1};
  const Tensor z = conv2d(x, w, bias, strided);
  CHECK(z.shape() == Shape{1, 1, 2, 2});
  CHECK(z.at(0, 0, 1, 1) == 28.5);
}

TEST_CASE("conv2d matches direct summation") {
  Rng rng(11);
  const ConvSpec specs[] = {
      ConvSpec::same(3, 4, 3), ConvSpec::same(2, 5, 1), {3, 2, 3, 3, 2, 2, 1, 1},
      {2, 3, 1, 1, 2, 2, 0, 0}, {2, 2, 3, 5, 1, 2, 1, 2}, {1, 3, 5, 5, 1, 1, 0, 0}};
  for (const auto& s : specs) {
    const Tensor x = oracle::random_tensor({2, s.in_channels, 9, 10}, rng);
    const Tensor w = oracle::random_tensor(s.weight_shape(), rng);
    std::vector<double> bias(s.out_channels);
    for (auto& b : bias) b = std::uniform_real_distribution<double>(-1, 1)(rng);
    const Tensor got = conv2d(x, w, bias, s);
    const Tensor want = oracle::conv2d(x, w, bias, s);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects mismatched shapes") {
  const Tensor x({1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Tensor({1, 3, 3, 3}), {}, ConvSpec::same(3, 1, 3)), ContractError);
  CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 5, 5}), {}, ConvSpec{2, 1, 5, 5, 1, 1, 0, 0}), ContractError);
}

TEST_CASE("batch norm train and eval modes") {
  // Channel 0 holds 1..4, channel 1 holds 10 everywhere.
  Tensor x({2, 2, 1, 2}, {1, 2, 10, 10, 3, 4, 10, 10});
  const auto fresh = BatchNormState::fresh(2);
  const auto r = batch_norm(x, fresh, Phase::train);
  const double inv = 1.0 / std::sqrt(1.25 + 1e-5);
  CHECK(r.output.at(0, 0, 0, 0) == doctest::Approx(-1.5 * inv).epsilon(1e-14));
  CHECK(r.output.at(1, 0, 0, 1) == doctest::Approx(1.5 * inv).epsilon(1e-14));
  CHECK(r.output.at(0, 1, 0, 0) == 0.0);
  CHECK(r.state.running_mean[0] == doctest::Approx(0.25));
  CHECK(r.state.running_var[0] == doctest::Approx(0.9 + 0.1 * 1.25));
  CHECK(r.state.running_mean[1] == doctest::Approx(1.0));
  CHECK(r.state.running_var[1] == doctest::Approx(0.9));
  CHECK(fresh.running_mean[0] == 0.0);

  BatchNormState s = BatchNormState::fresh(2);
  s.running_mean = {1.0, 10.0};
  s.running_var = {4.0 - 1e-5, 1.0};
  s.gamma = {2.0, 1.0};
  s.beta = {0.5, 0.0};
  const auto e = batch_norm(x, s, Phase::eval);
  CHECK(e.output.at(1, 0, 0, 1) == doctest::Approx(2.0 * 3.0 / 2.0 + 0.5).epsilon(1e-12));
  CHECK(e.state.running_mean == s.running_mean);
}

TEST_CASE("activations and pointwise ops") {
  const Tensor x({1, 1, 1, 4}, {-2.0, -0.0, 0.5, 3.0});
  const Tensor r = activation(x, Activation::relu);
  CHECK(r[0] == 0.0);
  CHECK_FALSE(std::signbit(r[1]));
  CHECK(r[3] == 3.0);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  const Tensor s = activation(x, Activation::sigmoid);
  CHECK(s[2] == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))));
  const Tensor h = hadamard(x, Tensor({1, 1, 1, 4}, 2.0));
  CHECK(h[3] == 6.0);
  CHECK(add(x, x)[0] == -4.0);
}

TEST_CASE("linear and global average pool") {
  const Tensor x({2, 3, 1, 1}, {1, 2, 3, -1, 0, 1});
  const Tensor w({2, 3, 1, 1}, {1, 0, -1, 2, 2, 2});
  const std::vector<double> b = {0.5, -1.0};
  const Tensor y = linear(x, w, b);
  CHECK(y.at(0, 0, 0, 0) == -1.5);
  CHECK(y.at(0, 1, 0, 0) == 11.0);
  CHECK(y.at(1, 0, 0, 0) == -1.5);
  const Tensor img({1, 2, 2, 2}, {1, 2, 3, 4, 0, 0, 0, 8});
  const Tensor p = global_avg_pool(img);
  CHECK(p[0] == 2.5);
  CHECK(p[1] == 2.0);
  const Tensor d = global_avg_pool_backward(img.shape(), Tensor({1, 2, 1, 1}, {4.0, 8.0}));
  CHECK(d[0] == 1.0);
  CHECK(d[7] == 2.0);
}

TEST_CASE("softmax and cross entropy") {
  const Tensor z({2, 10, 1, 1}, 0.0);
  const Tensor p = softmax(z);
  CHECK(p[3] == doctest::Approx(0.1).epsilon(1e-15));
  Tensor y({2, 10, 1, 1});
  y.at(0, 0, 0, 0) = 1.0;
  y.at(1, 7, 0, 0) = 1.0;
  CHECK(softmax_cross_entropy(z, y).loss == doctest::Approx(std::log(10.0)).epsilon(1e-15));

  const Tensor big({1, 3, 1, 1}, {1000.0, 1000.0, -1000.0});
  const Tensor q = softmax(big);
  CHECK(q[0] == doctest::Approx(0.5));
  CHECK(q[2] == 0.0);
  CHECK(softmax_cross_entropy(big, Tensor({1, 3, 1, 1}, {0.5, 0.5, 0.0})).loss ==
        doctest::Approx(std::log(2.0)));

  CHECK_THROWS_AS(softmax_cross_entropy(z, Tensor({2, 10, 1, 1}, 0.2)), ContractError);
  CHECK_THROWS_AS(validate_distribution_rows(Tensor({1, 2, 1, 1}, {1.5, -0.5}), "labels"), ContractError);
}

TEST_CASE("finite differences of a cubic") {
  const std::vector<double> p = {0.5, -1.0, 2.0};
  const ScalarFunction f = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v * v;
    return s;
  };
  const double eps = 1e-3;
  const auto g = finite_difference_gradient(f, p, eps);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(g[i] == doctest::Approx(3 * p[i] * p[i] + eps * eps).epsilon(1e-9));
  }
  const std::size_t coords[] = {2};
  const auto one = finite_difference_gradient(f, p, eps, coords);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == g[2]);
  const ScalarFunction bad = [](std::span<const double> x) { return x[0] > 0.5 ? NAN : 0.0; };
  CHECK_THROWS_AS(finite_difference_gradient(bad, p, eps), NumericError);
}

TEST_CASE("kernel gradient suite") {
  GradCheckOptions opts;
  opts.trials = 3;
  const auto report = grad_check(GradScope::kernel, 5, opts);
  for (const auto& e : report.entries) {
    INFO(e.group);
    CHECK(e.passed());
  }
  opts.corrupt_backward = true;
  CHECK_FALSE(grad_check(GradScope::kernel, 5, opts).passed());
}

TEST_CASE("relative error definition") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1e-9, 0.0) == doctest::Approx(1e-9 / kRelErrorFloor));
  CHECK(relative_error(1e-9, 0.0, 1e-3) == doctest::Approx(1e-6));
  CHECK_THROWS_AS(parse_grad_scope("everything"), ConfigError);
}

TEST_CASE("fft2d matches the direct DFT") {
  Rng rng(3);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{4, 4}, {5, 3}, {6, 8}, {7, 7}, {1, 9}}) {
    RealGrid x(r, c);
    for (auto& v : x.data) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto got = fft2d(x);
    const auto want = oracle::dft2d(x);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.data[i] - want.data[i]) < 1e-10);
    const auto back = ifft2d(got);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(back.data[i].real() - x.data[i]) < 1e-12);
      CHECK(std::abs(back.data[i].imag()) < 1e-12);
    }
    double energy = 0.0, spectral = 0.0;
    for (double v : x.data) energy += v * v;
    for (const auto& z : got.data) spectral += std::norm(z);
    CHECK(spectral / static_cast<double>(r * c) == doctest::Approx(energy).epsilon(1e-12));
  }
}

TEST_CASE("fft2d of delta and constant") {
  RealGrid delta(4, 6);
  delta(0, 0) = 1.0;
  for (const auto& z : fft2d(delta).data) CHECK(std::abs(z - 1.0) < 1e-15);
  const RealGrid ones(3, 5, 1.0);
  const auto f = fft2d(ones);
  CHECK(std::abs(f(0, 0) - 15.0) < 1e-12);
  CHECK(std::abs(f(1, 2)) < 1e-12);
}
