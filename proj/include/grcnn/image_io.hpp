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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "grcnn/fft.hpp"
#include "grcnn/tensor.hpp"

namespace grcnn {

/// 8-bit interleaved image (1 = gray, 3 = RGB).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Reads any PNG as gray (if it has no color) or RGB. Throws IoError.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

/// (1, C, H, W) tensor with values v / 255.
Tensor to_tensor(const Image8& image);
/// Sample `n` of a [0,1] tensor, clamped and rounded to 8 bits.
Image8 to_image8(const Tensor& t, std::size_t n = 0);

/// Luma (0.299 R + 0.587 G + 0.114 B) / 255, or v / 255 for gray input.
RealGrid to_gray_grid(const Image8& image);
Image8 to_image8(const RealGrid& grid);

}  // namespace grcnn
