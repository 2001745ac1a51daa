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
#include <filesystem>
#include <fstream>
#include <numeric>

#include "grcnn/augment.hpp"
#include "grcnn/error.hpp"
#include "grcnn/image_io.hpp"
#include "oracles.hpp"

using namespace grcnn;
namespace fs = std::filesystem;

namespace {

LabeledImage constant_image(double value, std::size_t label, std::size_t h, std::size_t w) {
  LabeledImage img{Tensor({1, 3, h, w}, value), std::vector<double>(10, 0.0)};
  img.label[label] = 1.0;
  return img;
}

RealGrid random_grid(std::size_t r, std::size_t c, Rng& rng) {
  RealGrid g(r, c);
  for (auto& v : g.data) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return g;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("cutmix label weight equals the counted A fraction") {
  Rng rng(1);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{32, 32}, {7, 13}, {1, 5}}) {
    const auto a = constant_image(1.0, 2, h, w);
    const auto b = constant_image(0.0, 5, h, w);
    for (int i = 0; i < 200; ++i) {
      const auto m = cutmix(a, b, rng);
      std::size_t from_a = 0;
      for (std::size_t p = 0; p < h * w; ++p) from_a += m.image[p] == 1.0;
      const double fraction = static_cast<double>(from_a) / static_cast<double>(h * w);
      CHECK(std::abs(m.soft_label[2] - fraction) <= 1.0 / static_cast<double>(h * w));
      CHECK(m.soft_label[2] + m.soft_label[5] == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(m.box.area() == from_a);
    }
  }
}

TEST_CASE("cutmix degenerate lambdas") {
  Rng rng(2);
  const LabeledImage a{oracle::random_tensor({1, 3, 9, 11}, rng, 0, 1), {0.0, 1.0, 0.0}};
  const LabeledImage b{oracle::random_tensor({1, 3, 9, 11}, rng, 0, 1), {0.0, 0.0, 1.0}};
  const auto zero = cutmix(a, b, 0.0, rng);
  CHECK(bitwise_equal(zero.image, b.image));
  CHECK(zero.soft_label == b.label);
  const auto one = cutmix(a, b, 1.0, rng);
  CHECK(bitwise_equal(one.image, a.image));
  CHECK(one.soft_label == a.label);
  CHECK_THROWS_AS(cutmix(a, b, 1.5, rng), ContractError);
}

TEST_CASE("cutmix box placement is uniform over valid offsets") {
  Rng rng(3);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) ++hits[sample_cutmix_mask(0.25, 8, 8, rng).box.y0];  // 4x4 box
  for (int v : hits) CHECK(std::abs(v - 1000) < 150);
}

TEST_CASE("batch cutmix keeps label rows normalized") {
  Rng rng(4);
  Tensor images = oracle::random_tensor({6, 3, 8, 8}, rng, 0, 1);
  const Tensor original = images;
  Tensor labels({6, 4, 1, 1});
  for (std::size_t n = 0; n < 6; ++n) labels.at(n, n % 4, 0, 0) = 1.0;
  const double lam = cutmix_batch(images, labels, rng);
  CHECK(lam >= 0.0);
  CHECK(lam <= 1.0);
  for (std::size_t n = 0; n < 6; ++n) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 4; ++k) sum += labels.at(n, k, 0, 0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(labels.at(n, n % 4, 0, 0) >= lam - 1e-15);
  }
  for (double v : images.values()) CHECK(std::find(original.values().begin(), original.values().end(), v) != original.values().end());
}

TEST_CASE("primitive transforms: zero magnitude and hand values") {
  Rng rng(5);
  const Tensor img = oracle::random_tensor({2, 3, 6, 7}, rng, 0, 1);
  for (const char* name : {"identity", "translate_x", "translate_y", "rotate", "shear_x", "shear_y", "posterize",
                           "solarize", "autocontrast", "equalize"}) {
    const auto kind = parse_primitive_kind(name);
    CHECK(to_string(kind) == name);
    CHECK(bitwise_equal(primitive_transform(img, kind, 0.0), img));
  }
  CHECK_THROWS_AS(parse_primitive_kind("blur"), ContractError);
  CHECK_THROWS_AS(primitive_transform(img, PrimitiveKind::posterize, 8.0), ContractError);
  CHECK_THROWS_AS(primitive_transform(img, PrimitiveKind::shear_x, 1.5), ContractError);

  const Tensor row({1, 1, 1, 4}, {0.1, 0.4, 0.7, 0.9});
  const Tensor sol = primitive_transform(row, PrimitiveKind::solarize, 0.5);
  CHECK(sol[0] == 0.1);
  CHECK(sol[1] == 0.4);
  CHECK(sol[2] == doctest::Approx(0.3));
  CHECK(sol[3] == doctest::Approx(0.1));
  const Tensor ac = primitive_transform(row, PrimitiveKind::autocontrast, 1.0);
  CHECK(ac[0] == 0.0);
  CHECK(ac[3] == 1.0);
  CHECK(ac[1] == doctest::Approx(0.375));
  const Tensor post = primitive_transform(Tensor({1, 1, 1, 1}, 200.0 / 255.0), PrimitiveKind::posterize, 4.0);
  CHECK(post[0] == 192.0 / 255.0);
  const Tensor shifted = primitive_transform(row, PrimitiveKind::translate_x, 1.0);
  CHECK(shifted[0] == 0.1);
  CHECK(shifted[1] == 0.1);
  CHECK(shifted[3] == 0.7);
}

TEST_CASE("translate round trip restores the interior") {
  Rng rng(6);
  const Tensor img = oracle::random_tensor({1, 1, 10, 10}, rng, 0, 1);
  const Tensor back =
      primitive_transform(primitive_transform(img, PrimitiveKind::translate_y, 2.0), PrimitiveKind::translate_y, -2.0);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 10; ++x) CHECK(back.at(0, 0, y, x) == img.at(0, 0, y, x));
}

TEST_CASE("rotation by 360 degrees is close to the identity") {
  Rng rng(7);
  const Tensor img = oracle::random_tensor({1, 2, 9, 9}, rng, 0, 1);
  const Tensor r = primitive_transform(img, PrimitiveKind::rotate, 360.0);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(r[i] == doctest::Approx(img[i]).epsilon(1e-9));
}

TEST_CASE("augmix output is a reproducible image in range") {
  Rng a(9), b(9);
  Rng data(1);
  const Tensor img = oracle::random_tensor({1, 3, 12, 12}, data, 0, 1);
  AugmixConfig cfg;
  const auto t1 = augmix(img, cfg, a);
  const auto t2 = augmix(img, cfg, b);
  CHECK(bitwise_equal(t1.aug1, t2.aug1));
  CHECK(bitwise_equal(t1.aug2, t2.aug2));
  CHECK(bitwise_equal(t1.clean, img));
  CHECK_FALSE(bitwise_equal(t1.aug1, t1.aug2));
  for (double v : t1.aug1.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  cfg.severity = 0.0;
  Rng c(3);
  const auto still = augmix_draw(img, cfg, c);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(still[i] == doctest::Approx(img[i]).epsilon(1e-12));
  cfg.width = 0;
  CHECK_THROWS_AS(augmix_draw(img, cfg, c), ContractError);
}

TEST_CASE("phase randomization keeps magnitude and mean") {
  Rng rng(10);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{8, 8}, {9, 7}, {16, 12}, {5, 5}, {1, 6}}) {
    const RealGrid img = random_grid(r, c, rng);
    const RealGrid noise = phase_randomize(img, rng);
    const auto x = oracle::dft2d(img);
    const auto y = oracle::dft2d(noise);
    double peak = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      peak = std::max(peak, std::abs(x.data[i]));
      worst = std::max(worst, std::abs(std::abs(x.data[i]) - std::abs(y.data[i])));
    }
    CHECK(worst / peak < 1e-9);
    const double mx = std::accumulate(img.data.begin(), img.data.end(), 0.0) / static_cast<double>(img.size());
    const double my = std::accumulate(noise.data.begin(), noise.data.end(), 0.0) / static_cast<double>(img.size());
    CHECK(std::abs(mx - my) < 1e-9);
    const auto check = compare_spectra(img, noise);
    CHECK(check.magnitude_error < 1e-9);
    CHECK(check.mean_error < 1e-9);
  }
}

TEST_CASE("phase randomization is seeded") {
  Rng data(11);
  const RealGrid img = random_grid(8, 8, data);
  Rng a(1), b(1), c(2);
  CHECK(phase_randomize(img, a).data == phase_randomize(img, b).data);
  CHECK(phase_randomize(img, a).data != phase_randomize(img, c).data);
  RealGrid bad = img;
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(phase_randomize(bad, a), NumericError);
}

TEST_CASE("blend and overlay fitting") {
  Rng rng(12);
  const Tensor img = oracle::random_tensor({2, 3, 4, 4}, rng, 0, 1);
  const Tensor overlay = oracle::random_tensor({1, 1, 4, 4}, rng, 0, 1);
  CHECK(bitwise_equal(blend(img, overlay, 0.0), img));
  const Tensor full = blend(img, overlay, 1.0);
  CHECK(full.at(1, 2, 3, 1) == overlay.at(0, 0, 3, 1));
  CHECK(blend(img, overlay, 0.25).at(0, 1, 2, 2) ==
        doctest::Approx(0.75 * img.at(0, 1, 2, 2) + 0.25 * overlay.at(0, 0, 2, 2)));
  CHECK_THROWS_AS(blend(img, Tensor({1, 2, 4, 4}), 0.5), ContractError);
  CHECK_THROWS_AS(blend(img, overlay, 1.5), ContractError);

  RealGrid big(10, 12);
  std::iota(big.data.begin(), big.data.end(), 0.0);
  const Tensor crop = fit_overlay(big, 4, 5, rng);
  CHECK(crop.at(0, 0, 1, 0) - crop.at(0, 0, 0, 0) == 12.0);
  CHECK(crop.at(0, 0, 0, 1) - crop.at(0, 0, 0, 0) == 1.0);
  const Tensor up = fit_overlay(big, 19, 23, rng);
  CHECK(up.at(0, 0, 0, 0) == 0.0);
  CHECK(up.at(0, 0, 18, 22) == 119.0);
  CHECK(up.at(0, 0, 0, 2) == doctest::Approx(1.0));
}

TEST_CASE("texture/noise dataset generation") {
  const fs::path root = fs::temp_directory_path() / "grcnn_test_textures";
  fs::remove_all(root);
  fs::create_directories(root / "in");
  Rng rng(13);
  for (int i = 0; i < 5; ++i) {
    Image8 img{20 + static_cast<std::size_t>(i), 16, 1, {}};
    img.pixels.resize(img.width * img.height);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
    write_png(root / "in" / ("tex" + std::to_string(i) + ".png"), img);
  }
  std::ofstream(root / "in" / "broken.png") << "not a png";

  const auto m1 = generate_texture_noise_dataset(root / "in", root / "out1", 42);
  const auto m2 = generate_texture_noise_dataset(root / "in", root / "out2", 42);
  CHECK(m1.entries.size() == 6);
  CHECK(m1.generated() == 5);
  for (const auto& e : m1.entries) {
    if (e.name == "broken") {
      CHECK(e.skipped);
      CHECK_FALSE(e.failed);
      continue;
    }
    CHECK(e.check.magnitude_error < 1e-9);
    CHECK(e.check.mean_error < 1e-9);
    CHECK(fs::exists(root / "out1" / e.noise_path));
    CHECK(slurp(root / "out1" / e.noise_path) == slurp(root / "out2" / e.noise_path));
    CHECK(read_png(root / "out1" / e.noise_path).width == read_png(root / "in" / (e.name + ".png")).width);
  }
  CHECK(slurp(root / "out1" / "manifest.tsv") == slurp(root / "out2" / "manifest.tsv"));
  CHECK(load_gray_pool(root / "out1" / "noise").size() == 5);
  CHECK_THROWS_AS(generate_texture_noise_dataset(root / "missing", root / "out3", 1), IoError);
  fs::remove_all(root);
}
