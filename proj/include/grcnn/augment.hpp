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

// Training-time input transformations. Pixel values live in [0, 1]. Every
// stochastic function draws only from the Rng it is given, so the same seed
// reproduces the same output bit for bit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "grcnn/fft.hpp"
#include "grcnn/random.hpp"
#include "grcnn/tensor.hpp"

namespace grcnn {

// ------------------------------------------------------------------ CutMix

/// Half-open pixel rectangle [y0, y1) x [x0, x1).
struct Box {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  [[nodiscard]] std::size_t area() const { return (y1 - y0) * (x1 - x0); }
  [[nodiscard]] bool contains(std::size_t y, std::size_t x) const {
    return y >= y0 && y < y1 && x >= x0 && x < x1;
  }
};

struct CutmixMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Box box;
  std::vector<std::uint8_t> mask;  // 1 inside the box (pixels taken from A)

  [[nodiscard]] std::size_t ones() const { return box.area(); }
  /// Fraction of pixels taken from A.
  [[nodiscard]] double fraction() const {
    return static_cast<double>(box.area()) / static_cast<double>(rows * cols);
  }
};

/// Box of round(sqrt(lambda) H) x round(sqrt(lambda) W) placed uniformly so it
/// lies entirely inside the image.
CutmixMask sample_cutmix_mask(double lambda, std::size_t height, std::size_t width, Rng& rng);

struct LabeledImage {
  Tensor image;  // (1, C, H, W)
  std::vector<double> label;
};

struct MixedSample {
  Tensor image;
  std::vector<double> soft_label;
  /// Mixing weight on A. Equals the box's area fraction, i.e. the drawn
  /// lambda after integer quantization of the box.
  double lambda = 0.0;
  Box box;
};

/// M * x_A + (1 - M) * x_B with the label mixed by pixel provenance.
MixedSample apply_cutmix(const LabeledImage& a, const LabeledImage& b, const CutmixMask& mask);
/// lambda ~ U(0, 1).
MixedSample cutmix(const LabeledImage& a, const LabeledImage& b, Rng& rng);
MixedSample cutmix(const LabeledImage& a, const LabeledImage& b, double lambda, Rng& rng);

/// Batch form: sample i is mixed with sample perm[i] of the same batch using
/// one lambda and one box. `labels` is (N, K, 1, 1); both are updated in place.
/// Returns the effective lambda.
double cutmix_batch(Tensor& images, Tensor& labels, Rng& rng);

// ---------------------------------------------------------- primitive ops

enum class PrimitiveKind {
  identity,
  translate_x,   // pixels, |m| <= max(H, W)
  translate_y,
  rotate,        // degrees, |m| <= 360
  shear_x,       // shear factor, |m| <= 1
  shear_y,
  posterize,     // bits removed from an 8-bit grid, m in [0, 7]
  solarize,      // pixels above 1 - m are inverted, m in [0, 1]
  autocontrast,  // blend strength, m in [0, 1]
  equalize,      // blend strength, m in [0, 1]
};

PrimitiveKind parse_primitive_kind(const std::string& name);
std::string to_string(PrimitiveKind kind);

/// Shape-preserving transform applied to every (n, c) plane. Geometric kinds
/// resample bilinearly with edge padding. Magnitude 0 is the identity for all
/// kinds. Throws ContractError when the magnitude is out of range.
Tensor primitive_transform(const Tensor& image, PrimitiveKind kind, double magnitude);

// ------------------------------------------------------------------ AugMix

struct AugmixConfig {
  std::size_t width = 3;
  std::size_t max_depth = 3;
  double severity = 3.0;  // 0..10
  double dirichlet_alpha = 1.0;
  double beta_alpha = 1.0;
  std::vector<PrimitiveKind> ops = {
      PrimitiveKind::autocontrast, PrimitiveKind::equalize,    PrimitiveKind::posterize,
      PrimitiveKind::rotate,       PrimitiveKind::solarize,    PrimitiveKind::shear_x,
      PrimitiveKind::shear_y,      PrimitiveKind::translate_x, PrimitiveKind::translate_y};

  void validate() const;
};

struct AugmentedTriple {
  Tensor clean;
  Tensor aug1;
  Tensor aug2;
};

/// One AugMix draw: `width` chains of 1..max_depth random primitives, mixed
/// with Dirichlet weights, then blended with the clean image by a Beta draw.
Tensor augmix_draw(const Tensor& image, const AugmixConfig& cfg, Rng& rng);
AugmentedTriple augmix(const Tensor& image, const AugmixConfig& cfg, Rng& rng);

// --------------------------------------------------- phase randomization

/// Keeps the Fourier magnitude, draws Hermitian-symmetric uniform phases for
/// every conjugate pair, keeps self-conjugate bins (DC, Nyquist) as their
/// original real values, and inverts. Throws SymmetryError when the inverse
/// has an imaginary part >= 1e-9. The largest imaginary magnitude of the
/// inverse is stored in `imaginary_residue` when given.
RealGrid phase_randomize(const RealGrid& image, Rng& rng, double* imaginary_residue = nullptr);

struct SpectrumCheck {
  double magnitude_error = 0.0;  // max_k ||Y_k| - |X_k|| / max_k |X_k|
  double mean_error = 0.0;       // |mean(y) - mean(x)|
};

/// Compares the magnitude spectra of two same-size grids.
SpectrumCheck compare_spectra(const RealGrid& source, const RealGrid& output);

// ------------------------------------------------------------------- blend

/// (1 - alpha) * image + alpha * overlay, clamped to [0, 1]. The overlay is
/// (1, 1 or C, H, W) and broadcasts over the batch and, when single-channel,
/// over channels.
Tensor blend(const Tensor& image, const Tensor& overlay, double alpha);

/// Overlay sized to (H, W): a random crop when the source is large enough in
/// both dimensions, otherwise a bilinear resize.
Tensor fit_overlay(const RealGrid& source, std::size_t height, std::size_t width, Rng& rng);

// ------------------------------------------------- texture/noise dataset

struct ManifestEntry {
  std::string name;
  std::string texture_path;  // relative to the output directory
  std::string noise_path;    // "SKIPPED" when the source could not be read
  std::uint64_t seed = 0;
  bool skipped = false;
  bool failed = false;  // the source was read but its noise field is not real
  std::string reason;
  SpectrumCheck check;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  [[nodiscard]] std::size_t generated() const;
  /// Columns: name, texture_path, noise_path, seed.
  void write_tsv(const std::filesystem::path& path) const;
};

/// For every regular file in `texture_dir` (sorted by name) writes
/// textures/<name>.png, noise/<name>.png and manifest.tsv under `out_dir`.
/// Per-file seeds derive from (seed, name); unreadable files are recorded as
/// skipped. Each entry's SpectrumCheck compares the texture with its noise
/// field before 8-bit quantization.
Manifest generate_texture_noise_dataset(const std::filesystem::path& texture_dir,
                                        const std::filesystem::path& out_dir, std::uint64_t seed);

/// Loads every PNG in `dir` (sorted) as a gray grid.
std::vector<RealGrid> load_gray_pool(const std::filesystem::path& dir);

}  // namespace grcnn
