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

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace grcnn {

/// Row-major 2-D array.
template <class T>
struct Array2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Array2D() = default;
  Array2D(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  [[nodiscard]] std::size_t size() const { return data.size(); }
};

using RealGrid = Array2D<double>;
using ComplexGrid = Array2D<std::complex<double>>;

/// In-place 1-D DFT of any length: iterative radix-2 for powers of two,
/// Bluestein's chirp-z otherwise. `inverse` flips the exponent sign and does
/// NOT scale by 1/n.
void fft_inplace(std::span<std::complex<double>> x, bool inverse);

/// Unnormalized forward 2-D DFT: X[k,l] = sum x[m,n] exp(-2 pi i (km/H + ln/W)).
ComplexGrid fft2d(const RealGrid& image);
ComplexGrid fft2d(const ComplexGrid& image);
/// Inverse of fft2d (includes the 1/(H W) factor).
ComplexGrid ifft2d(const ComplexGrid& spectrum);

}  // namespace grcnn
