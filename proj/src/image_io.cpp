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

#include "grcnn/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "grcnn/error.hpp"

namespace grcnn {

Image8 read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG '" + path.string() + "': " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out{img.width, img.height, color ? 3u : 1u, {}};
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw IoError("write_png: only gray and RGB images are supported");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

Tensor to_tensor(const Image8& image) {
  Tensor t({1, image.channels, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        t.at(0, c, y, x) = image.pixels[(y * image.width + x) * image.channels + c] / 255.0;
      }
    }
  }
  return t;
}

namespace {
std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace

Image8 to_image8(const Tensor& t, std::size_t n) {
  const auto& s = t.shape();
  Image8 img{s.w, s.h, s.c, std::vector<std::uint8_t>(s.sample())};
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      for (std::size_t c = 0; c < s.c; ++c) {
        img.pixels[(y * s.w + x) * s.c + c] = quantize(t.at(n, c, y, x));
      }
    }
  }
  return img;
}

RealGrid to_gray_grid(const Image8& image) {
  RealGrid g(image.height, image.width);
  for (std::size_t i = 0; i < image.width * image.height; ++i) {
    if (image.channels == 1) {
      g.data[i] = image.pixels[i] / 255.0;
    } else {
      const auto* p = &image.pixels[i * image.channels];
      g.data[i] = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
  }
  return g;
}

Image8 to_image8(const RealGrid& grid) {
  Image8 img{grid.cols, grid.rows, 1, std::vector<std::uint8_t>(grid.size())};
  for (std::size_t i = 0; i < grid.size(); ++i) img.pixels[i] = quantize(grid.data[i]);
  return img;
}

}  // namespace grcnn
