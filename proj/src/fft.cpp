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

#include "grcnn/fft.hpp"

#include <cmath>
#include <numbers>

namespace grcnn {
namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void radix2(std::span<std::complex<double>> x, bool inverse) {
  const std::size_t n = x.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles computed directly rather than by repeated multiplication.
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(len);
      const std::complex<double> w(std::cos(angle), std::sin(angle));
      for (std::size_t i = k; i < n; i += len) {
        const auto u = x[i];
        const auto v = x[i + half] * w;
        x[i] = u + v;
        x[i + half] = u - v;
      }
    }
  }
}

void bluestein(std::span<std::complex<double>> x, bool inverse) {
  const std::size_t n = x.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  const double sign = inverse ? 1.0 : -1.0;

  std::vector<std::complex<double>> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for large k.
    const auto k2 = (k * k) % (2 * n);
    const double angle = sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = {std::cos(angle), std::sin(angle)};
  }
  std::vector<std::complex<double>> a(m), b(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);
  radix2(a, false);
  radix2(b, false);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  radix2(a, true);
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * scale * chirp[k];
}

}  // namespace

void fft_inplace(std::span<std::complex<double>> x, bool inverse) {
  if (x.size() <= 1) return;
  if (is_power_of_two(x.size())) {
    radix2(x, inverse);
  } else {
    bluestein(x, inverse);
  }
}

namespace {

ComplexGrid transform(ComplexGrid g, bool inverse) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    fft_inplace(std::span(g.data).subspan(r * g.cols, g.cols), inverse);
  }
  std::vector<std::complex<double>> column(g.rows);
  for (std::size_t c = 0; c < g.cols; ++c) {
    for (std::size_t r = 0; r < g.rows; ++r) column[r] = g(r, c);
    fft_inplace(column, inverse);
    for (std::size_t r = 0; r < g.rows; ++r) g(r, c) = column[r];
  }
  return g;
}

}  // namespace

ComplexGrid fft2d(const ComplexGrid& image) { return transform(image, false); }

ComplexGrid fft2d(const RealGrid& image) {
  ComplexGrid g(image.rows, image.cols);
  for (std::size_t i = 0; i < image.size(); ++i) g.data[i] = image.data[i];
  return transform(std::move(g), false);
}

ComplexGrid ifft2d(const ComplexGrid& spectrum) {
  ComplexGrid g = transform(spectrum, true);
  const double scale = 1.0 / static_cast<double>(g.size());
  for (auto& v : g.data) v *= scale;
  return g;
}

}  // namespace grcnn
