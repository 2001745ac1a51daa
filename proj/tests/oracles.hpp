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

// Reference implementations used by the tests. They are written directly
// from the defining formulas and share no code paths with the library beyond
// the primitive kernels named in each function.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "grcnn/fft.hpp"
#include "grcnn/grcl.hpp"
#include "grcnn/kernels.hpp"
#include "grcnn/random.hpp"
#include "grcnn/tensor.hpp"

namespace oracle {

using grcnn::Rng;
using grcnn::Shape;
using grcnn::Tensor;

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

/// Direct summation over the kernel window with zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::vector<double>& bias,
                     const grcnn::ConvSpec& s) {
  const auto& xs = x.shape();
  const std::size_t ho = (xs.h + 2 * s.ph - s.kh) / s.sh + 1;
  const std::size_t wo = (xs.w + 2 * s.pw - s.kw) / s.sw + 1;
  Tensor y({xs.n, s.out_channels, ho, wo});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < s.in_channels; ++c)
            for (std::size_t a = 0; a < s.kh; ++a)
              for (std::size_t b = 0; b < s.kw; ++b) {
                const long r = static_cast<long>(i * s.sh + a) - static_cast<long>(s.ph);
                const long q = static_cast<long>(j * s.sw + b) - static_cast<long>(s.pw);
                if (r < 0 || q < 0 || r >= static_cast<long>(xs.h) || q >= static_cast<long>(xs.w)) continue;
                acc += x.at(n, c, r, q) * w.at(o, c, a, b);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

/// Textbook O(N^2) DFT per axis.
inline grcnn::ComplexGrid dft2d(const grcnn::RealGrid& x) {
  grcnn::ComplexGrid out(x.rows, x.cols);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t k = 0; k < x.rows; ++k)
    for (std::size_t l = 0; l < x.cols; ++l) {
      std::complex<double> acc = 0.0;
      for (std::size_t m = 0; m < x.rows; ++m)
        for (std::size_t n = 0; n < x.cols; ++n) {
          const double ph = -two_pi * (static_cast<double>(k * m) / x.rows + static_cast<double>(l * n) / x.cols);
          acc += x(m, n) * std::complex<double>(std::cos(ph), std::sin(ph));
        }
      out(k, l) = acc;
    }
  return out;
}

/// JS divergence of three rows, summed term by term:
/// (KL(p1||M) + KL(p2||M) + KL(p3||M)) / 3 with M the average.
inline double js3(const std::vector<double>& p1, const std::vector<double>& p2, const std::vector<double>& p3) {
  double total = 0.0;
  for (std::size_t k = 0; k < p1.size(); ++k) {
    const double m = (p1[k] + p2[k] + p3[k]) / 3.0;
    for (double p : {p1[k], p2[k], p3[k]}) {
      if (p > 0) total += p * std::log(p / m);
    }
  }
  return total / 3.0;
}

/// Plain residual chain x_t = x_{t-1} + A_t(x_{t-1}) built from the conv, BN
/// and ReLU kernels with its own loop and its own elementwise sum.
inline Tensor residual_chain(const Tensor& u, const grcnn::GrclParams& p, grcnn::Phase phase) {
  auto block = [&](const grcnn::Conv& conv, const grcnn::BatchNormState& bn, const Tensor& x) {
    const Tensor z = grcnn::conv2d(x, conv.weight, conv.bias, conv.spec);
    return grcnn::activation(grcnn::batch_norm(z, bn, phase).output, grcnn::Activation::relu);
  };
  Tensor x = block(p.a0.conv, p.a0.bn, u);
  for (std::size_t t = 0; t < p.steps; ++t) {
    const grcnn::Conv& conv = p.tie_weights ? p.a_rec.convs[0] : p.a_rec.convs[t];
    const Tensor a = block(conv, p.a_rec.norms[t], x);
    Tensor next(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = x[i] + a[i];
    x = std::move(next);
  }
  return x;
}

/// Random GRCL block with non-trivial BN affine parameters and running stats.
inline grcnn::GrclParams random_block(std::size_t in, std::size_t ch, std::size_t steps, bool tied, Rng& rng) {
  grcnn::GrclShape shape;
  shape.in_channels = in;
  shape.channels = ch;
  shape.steps = steps;
  shape.tie_weights = tied;
  auto p = grcnn::make_grcl(shape, rng);
  std::uniform_real_distribution<double> g(0.5, 1.5), b(-0.3, 0.3), v(0.5, 2.0);
  grcnn::for_each_batch_norm(p, [&](grcnn::BatchNormState& bn) {
    for (auto& x : bn.gamma) x = g(rng);
    for (auto& x : bn.beta) x = b(rng);
    for (auto& x : bn.running_mean) x = b(rng);
    for (auto& x : bn.running_var) x = v(rng);
  });
  return p;
}

}  // namespace oracle
