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

#include "grcnn/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "grcnn/error.hpp"
#include "grcnn/image_io.hpp"
#include "grcnn/random.hpp"

namespace grcnn {

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const Shape s = images.shape();
  Tensor out({indices.size(), s.c, s.h, s.w});
  const std::size_t stride = s.sample();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ContractError("Dataset::batch: index out of range");
    std::copy_n(images.data() + indices[i] * stride, stride, out.data() + i * stride);
  }
  return out;
}

Tensor Dataset::one_hot(std::span<const std::size_t> indices) const {
  Tensor out({indices.size(), num_classes, 1, 1});
  for (std::size_t i = 0; i < indices.size(); ++i) out[i * num_classes + labels[indices[i]]] = 1.0;
  return out;
}

void Dataset::validate() const {
  if (images.shape().n != labels.size()) throw ContractError("Dataset: image and label counts differ");
  for (std::size_t y : labels) {
    if (y >= num_classes) throw ContractError("Dataset: label " + std::to_string(y) + " out of range");
  }
}

namespace {

bool inside_shape(std::size_t kind, double u, double v) {
  const double r2 = u * u + v * v;
  switch (kind) {
    case 0: return r2 <= 1.0;
    case 1: return std::max(std::abs(u), std::abs(v)) <= 0.8;
    case 2: return v >= -0.8 && v <= 0.8 && std::abs(u) <= 0.5 * (v + 0.8) / 1.6 * 1.9;
    case 3: return (std::abs(u) <= 0.3 && std::abs(v) <= 0.95) || (std::abs(v) <= 0.3 && std::abs(u) <= 0.95);
    case 4: return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    case 5: return std::abs(u) + std::abs(v) <= 1.0;
    case 6: {
      const double d1 = std::abs(u - v) / std::numbers::sqrt2;
      const double d2 = std::abs(u + v) / std::numbers::sqrt2;
      return r2 <= 1.0 && (d1 <= 0.22 || d2 <= 0.22);
    }
    case 7: return std::abs(u) <= 1.0 && std::abs(v) <= 0.3;
    case 8: return std::abs(v) <= 1.0 && std::abs(u) <= 0.3;
    default: {
      const double a = (u - 0.55) * (u - 0.55) + v * v;
      const double b = (u + 0.55) * (u + 0.55) + v * v;
      return std::min(a, b) <= 0.4 * 0.4;
    }
  }
}

double luma(const std::array<double, 3>& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

void render_sample(Tensor& images, std::size_t index, std::size_t kind, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t size = images.shape().h;
  const double n = static_cast<double>(size);

  std::array<double, 3> bg{};
  for (auto& c : bg) c = 0.15 + 0.7 * unit(rng);
  struct Grating {
    double fy, fx, phase, amp;
  };
  std::array<Grating, 2> gratings{};
  for (auto& g : gratings) {
    const double freq = 0.08 + 0.35 * unit(rng);
    const double angle = std::numbers::pi * unit(rng);
    g = {freq * std::sin(angle), freq * std::cos(angle), 2.0 * std::numbers::pi * unit(rng), 0.06 + 0.08 * unit(rng)};
  }

  std::array<double, 3> fg{};
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (auto& c : fg) c = unit(rng);
    if (std::abs(luma(fg) - luma(bg)) >= 0.3) break;
  }

  const double radius = n * (0.2 + 0.13 * unit(rng));
  const double cy = radius + (n - 2.0 * radius) * unit(rng);
  const double cx = radius + (n - 2.0 * radius) * unit(rng);
  const double theta = (unit(rng) - 0.5) * std::numbers::pi / 6.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);

  std::normal_distribution<double> grain(0.0, 0.03);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double texture = 0.0;
      for (const auto& g : gratings) {
        texture += g.amp * std::sin(2.0 * std::numbers::pi * (g.fy * static_cast<double>(y) + g.fx * static_cast<double>(x)) + g.phase);
      }
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double py = (static_cast<double>(y) + 0.25 + 0.5 * sy - cy) / radius;
          const double px = (static_cast<double>(x) + 0.25 + 0.5 * sx - cx) / radius;
          if (inside_shape(kind, cs * px + sn * py, -sn * px + cs * py)) ++hits;
        }
      }
      const double cover = hits / 4.0;
      const double noise = grain(rng);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1.0 - cover) * (bg[c] + texture) + cover * fg[c] + noise;
        images.at(index, c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
}

}  // namespace

Dataset make_synthetic(std::size_t count, std::size_t image_size, std::uint64_t seed) {
  if (image_size < 8) throw ContractError("make_synthetic: image size must be at least 8");
  Dataset d;
  d.num_classes = kSyntheticClasses;
  d.class_names = {"disc", "square", "triangle", "plus", "ring", "diamond", "cross", "hbar", "vbar", "dots"};
  d.images = Tensor({count, 3, image_size, image_size});
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = i % kSyntheticClasses;
    render_sample(d.images, i, d.labels[i], derive_seed(seed, i));
  }
  return d;
}

Dataset make_separable_toy(std::size_t count, std::size_t image_size, std::uint64_t seed) {
  Dataset d;
  d.num_classes = 2;
  d.class_names = {"dark", "bright"};
  d.images = Tensor({count, 3, image_size, image_size});
  d.labels.resize(count);
  const std::size_t stride = d.images.shape().sample();
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = i % 2;
    Rng rng(derive_seed(seed, i));
    std::uniform_real_distribution<double> pixel(d.labels[i] == 0 ? 0.0 : 0.6, d.labels[i] == 0 ? 0.4 : 1.0);
    for (std::size_t j = 0; j < stride; ++j) d.images[i * stride + j] = pixel(rng);
  }
  return d;
}

Dataset load_image_folder(const std::filesystem::path& root, std::size_t image_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset directory '" + root.string() + "' does not exist");
  Dataset d;
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  std::vector<std::pair<fs::path, std::size_t>> files;
  for (std::size_t k = 0; k < class_dirs.size(); ++k) {
    d.class_names.push_back(class_dirs[k].filename().string());
    std::vector<fs::path> pngs;
    for (const auto& e : fs::directory_iterator(class_dirs[k])) {
      if (e.is_regular_file() && e.path().extension() == ".png") pngs.push_back(e.path());
    }
    std::sort(pngs.begin(), pngs.end());
    for (auto& p : pngs) files.emplace_back(std::move(p), k);
  }
  if (files.empty()) throw IoError("dataset directory '" + root.string() + "' holds no class images");
  d.num_classes = class_dirs.size();
  d.images = Tensor({files.size(), 3, image_size, image_size});
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Image8 img = read_png(files[i].first);
    if (img.width != image_size || img.height != image_size) {
      throw IoError("image '" + files[i].first.string() + "' is " + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + ", expected " + std::to_string(image_size) + "x" +
                    std::to_string(image_size));
    }
    const Tensor t = to_tensor(img);
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = img.channels == 1 ? 0 : c;
      std::copy_n(t.data() + src * t.shape().plane(), t.shape().plane(),
                  d.images.data() + d.images.offset(i, c, 0, 0));
    }
    d.labels.push_back(files[i].second);
  }
  return d;
}

void write_image_folder(const Dataset& data, const std::filesystem::path& root) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t k = data.labels[i];
    char cls[64];
    std::snprintf(cls, sizeof cls, "%02zu_%s", k, k < data.class_names.size() ? data.class_names[k].c_str() : "class");
    const auto dir = root / cls;
    std::filesystem::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    write_png(dir / name, to_image8(data.images, i));
  }
}

}  // namespace grcnn
