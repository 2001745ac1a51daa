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

#include "grcnn/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "grcnn/error.hpp"
#include "grcnn/image_io.hpp"

namespace grcnn {

// ------------------------------------------------------------------ CutMix

CutmixMask sample_cutmix_mask(double lambda, std::size_t height, std::size_t width, Rng& rng) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("sample_cutmix_mask: lambda " + std::to_string(lambda) + " outside [0,1]");
  }
  const double side = std::sqrt(lambda);
  const auto bh = std::min(height, static_cast<std::size_t>(std::lround(side * static_cast<double>(height))));
  const auto bw = std::min(width, static_cast<std::size_t>(std::lround(side * static_cast<double>(width))));
  std::uniform_int_distribution<std::size_t> py(0, height - bh);
  std::uniform_int_distribution<std::size_t> px(0, width - bw);
  CutmixMask m;
  m.rows = height;
  m.cols = width;
  m.box.y0 = py(rng);
  m.box.x0 = px(rng);
  m.box.y1 = m.box.y0 + bh;
  m.box.x1 = m.box.x0 + bw;
  m.mask.assign(height * width, 0);
  for (std::size_t y = m.box.y0; y < m.box.y1; ++y) {
    for (std::size_t x = m.box.x0; x < m.box.x1; ++x) m.mask[y * width + x] = 1;
  }
  return m;
}

MixedSample apply_cutmix(const LabeledImage& a, const LabeledImage& b, const CutmixMask& mask) {
  const auto& s = a.image.shape();
  if (s != b.image.shape()) {
    throw ContractError("cutmix: image shapes " + s.str() + " and " + b.image.shape().str() + " differ");
  }
  if (a.label.size() != b.label.size()) throw ContractError("cutmix: label lengths differ");
  if (mask.rows != s.h || mask.cols != s.w) throw ContractError("cutmix: mask does not match image");

  MixedSample out;
  out.image = Tensor(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t p = 0; p < s.plane(); ++p) {
        out.image[base + p] = mask.mask[p] ? a.image[base + p] : b.image[base + p];
      }
    }
  }
  out.lambda = mask.fraction();
  out.box = mask.box;
  out.soft_label.resize(a.label.size());
  for (std::size_t k = 0; k < a.label.size(); ++k) {
    out.soft_label[k] = out.lambda * a.label[k] + (1.0 - out.lambda) * b.label[k];
  }
  return out;
}

MixedSample cutmix(const LabeledImage& a, const LabeledImage& b, double lambda, Rng& rng) {
  const auto& s = a.image.shape();
  return apply_cutmix(a, b, sample_cutmix_mask(lambda, s.h, s.w, rng));
}

MixedSample cutmix(const LabeledImage& a, const LabeledImage& b, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double lambda = u(rng);
  return cutmix(a, b, lambda, rng);
}

double cutmix_batch(Tensor& images, Tensor& labels, Rng& rng) {
  const auto& s = images.shape();
  const std::size_t k = labels.shape().sample();
  if (labels.shape().n != s.n) throw ContractError("cutmix_batch: label rows != batch size");
  std::vector<std::size_t> perm(s.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double lambda = u(rng);
  const auto mask = sample_cutmix_mask(lambda, s.h, s.w, rng);
  const Tensor src_images = images;
  const Tensor src_labels = labels;
  const double f = mask.fraction();
  for (std::size_t n = 0; n < s.n; ++n) {
    const std::size_t m = perm[n];
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t p = 0; p < s.plane(); ++p) {
        if (!mask.mask[p]) {
          images[(n * s.c + c) * s.plane() + p] = src_images[(m * s.c + c) * s.plane() + p];
        }
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      labels[n * k + j] = f * src_labels[n * k + j] + (1.0 - f) * src_labels[m * k + j];
    }
  }
  return f;
}

// ---------------------------------------------------------- primitive ops

namespace {

constexpr std::array<std::pair<PrimitiveKind, const char*>, 10> kKindNames{{
    {PrimitiveKind::identity, "identity"},
    {PrimitiveKind::translate_x, "translate_x"},
    {PrimitiveKind::translate_y, "translate_y"},
    {PrimitiveKind::rotate, "rotate"},
    {PrimitiveKind::shear_x, "shear_x"},
    {PrimitiveKind::shear_y, "shear_y"},
    {PrimitiveKind::posterize, "posterize"},
    {PrimitiveKind::solarize, "solarize"},
    {PrimitiveKind::autocontrast, "autocontrast"},
    {PrimitiveKind::equalize, "equalize"},
}};

double bilinear(const double* plane, std::size_t h, std::size_t w, double sy, double sx) {
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - static_cast<double>(y0);
  const double fx = sx - static_cast<double>(x0);
  const double top = (1.0 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1];
  const double bottom = (1.0 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1];
  return (1.0 - fy) * top + fy * bottom;
}

template <class SourceFn>
void resample(const double* src, double* dst, std::size_t h, std::size_t w, SourceFn&& source) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto [sy, sx] = source(static_cast<double>(y), static_cast<double>(x));
      dst[y * w + x] = bilinear(src, h, w, sy, sx);
    }
  }
}

void check_range(PrimitiveKind kind, double m, double lo, double hi) {
  if (!(m >= lo && m <= hi)) {
    throw ContractError("primitive_transform: magnitude " + std::to_string(m) + " outside [" +
                        std::to_string(lo) + "," + std::to_string(hi) + "] for " + to_string(kind));
  }
}

void equalize_plane(const double* src, double* dst, std::size_t count, double strength) {
  std::array<std::size_t, 256> hist{};
  auto bin = [](double v) {
    return static_cast<std::size_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
  };
  for (std::size_t i = 0; i < count; ++i) ++hist[bin(src[i])];
  std::array<std::size_t, 256> cdf{};
  std::partial_sum(hist.begin(), hist.end(), cdf.begin());
  const auto first = std::find_if(cdf.begin(), cdf.end(), [](std::size_t v) { return v > 0; });
  const std::size_t cdf_min = first == cdf.end() ? 0 : *first;
  for (std::size_t i = 0; i < count; ++i) {
    double eq = src[i];
    if (count > cdf_min) {
      eq = static_cast<double>(cdf[bin(src[i])] - cdf_min) / static_cast<double>(count - cdf_min);
    }
    dst[i] = (1.0 - strength) * src[i] + strength * eq;
  }
}

}  // namespace

PrimitiveKind parse_primitive_kind(const std::string& name) {
  for (const auto& [kind, label] : kKindNames) {
    if (name == label) return kind;
  }
  throw ContractError("unknown primitive transform '" + name + "'");
}

std::string to_string(PrimitiveKind kind) {
  for (const auto& [k, label] : kKindNames) {
    if (k == kind) return label;
  }
  return "unknown";
}

Tensor primitive_transform(const Tensor& image, PrimitiveKind kind, double magnitude) {
  const auto& s = image.shape();
  const double h = static_cast<double>(s.h);
  const double w = static_cast<double>(s.w);
  switch (kind) {
    case PrimitiveKind::identity: break;
    case PrimitiveKind::translate_x:
    case PrimitiveKind::translate_y: check_range(kind, magnitude, -std::max(h, w), std::max(h, w)); break;
    case PrimitiveKind::rotate: check_range(kind, magnitude, -360.0, 360.0); break;
    case PrimitiveKind::shear_x:
    case PrimitiveKind::shear_y: check_range(kind, magnitude, -1.0, 1.0); break;
    case PrimitiveKind::posterize: check_range(kind, magnitude, 0.0, 7.0); break;
    case PrimitiveKind::solarize:
    case PrimitiveKind::autocontrast:
    case PrimitiveKind::equalize: check_range(kind, magnitude, 0.0, 1.0); break;
  }
  if (kind == PrimitiveKind::identity || magnitude == 0.0 || image.empty()) return image;

  Tensor out(s);
  const double cy = (h - 1.0) / 2.0;
  const double cx = (w - 1.0) / 2.0;
  const double theta = magnitude * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);

  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    const double* src = image.data() + plane * s.plane();
    double* dst = out.data() + plane * s.plane();
    switch (kind) {
      case PrimitiveKind::translate_x:
        resample(src, dst, s.h, s.w, [&](double y, double x) { return std::pair{y, x - magnitude}; });
        break;
      case PrimitiveKind::translate_y:
        resample(src, dst, s.h, s.w, [&](double y, double x) { return std::pair{y - magnitude, x}; });
        break;
      case PrimitiveKind::rotate:
        resample(src, dst, s.h, s.w, [&](double y, double x) {
          const double dy = y - cy;
          const double dx = x - cx;
          return std::pair{cy - sin_t * dx + cos_t * dy, cx + cos_t * dx + sin_t * dy};
        });
        break;
      case PrimitiveKind::shear_x:
        resample(src, dst, s.h, s.w,
                 [&](double y, double x) { return std::pair{y, x - magnitude * (y - cy)}; });
        break;
      case PrimitiveKind::shear_y:
        resample(src, dst, s.h, s.w,
                 [&](double y, double x) { return std::pair{y - magnitude * (x - cx), x}; });
        break;
      case PrimitiveKind::posterize: {
        const auto bits = static_cast<unsigned>(magnitude);
        const unsigned keep = 0xFFu & ~((1u << bits) - 1u);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const auto v8 = static_cast<unsigned>(std::clamp(std::lround(src[i] * 255.0), 0L, 255L));
          dst[i] = static_cast<double>(v8 & keep) / 255.0;
        }
        break;
      }
      case PrimitiveKind::solarize: {
        const double threshold = 1.0 - magnitude;
        for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = src[i] > threshold ? 1.0 - src[i] : src[i];
        break;
      }
      case PrimitiveKind::autocontrast: {
        const auto [lo, hi] = std::minmax_element(src, src + s.plane());
        const double range = *hi - *lo;
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const double stretched = range > 0.0 ? (src[i] - *lo) / range : src[i];
          dst[i] = (1.0 - magnitude) * src[i] + magnitude * stretched;
        }
        break;
      }
      case PrimitiveKind::equalize:
        equalize_plane(src, dst, s.plane(), magnitude);
        break;
      case PrimitiveKind::identity:
        break;
    }
  }
  return out;
}

// ------------------------------------------------------------------ AugMix

void AugmixConfig::validate() const {
  if (width < 1) throw ContractError("augmix: width must be >= 1");
  if (max_depth < 1) throw ContractError("augmix: max_depth must be >= 1");
  if (!(severity >= 0.0 && severity <= 10.0)) throw ContractError("augmix: severity must lie in [0,10]");
  if (!(dirichlet_alpha > 0.0) || !(beta_alpha > 0.0)) {
    throw ContractError("augmix: mixing-distribution parameters must be > 0");
  }
  if (ops.empty()) throw ContractError("augmix: at least one primitive required");
}

namespace {

// Magnitude for one application, scaled by severity as in the AugMix
// reference: level ~ U(0.1, severity), value = level / 10 * max.
double sample_magnitude(PrimitiveKind kind, double severity, const Shape& s, Rng& rng) {
  if (severity <= 0.0) return 0.0;
  std::uniform_real_distribution<double> level_dist(std::min(0.1, severity), severity);
  const double level = level_dist(rng) / 10.0;
  std::bernoulli_distribution flip(0.5);
  const double sign = flip(rng) ? -1.0 : 1.0;
  switch (kind) {
    case PrimitiveKind::translate_x: return sign * level * static_cast<double>(s.w) / 3.0;
    case PrimitiveKind::translate_y: return sign * level * static_cast<double>(s.h) / 3.0;
    case PrimitiveKind::rotate: return sign * level * 30.0;
    case PrimitiveKind::shear_x:
    case PrimitiveKind::shear_y: return sign * level * 0.3;
    case PrimitiveKind::posterize: return std::floor(level * 4.0);
    case PrimitiveKind::solarize: return level;
    case PrimitiveKind::autocontrast:
    case PrimitiveKind::equalize: return 1.0;
    case PrimitiveKind::identity: return 0.0;
  }
  return 0.0;
}

}  // namespace

Tensor augmix_draw(const Tensor& image, const AugmixConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto weights = sample_dirichlet(cfg.width, cfg.dirichlet_alpha, rng);
  const double m = sample_beta(cfg.beta_alpha, cfg.beta_alpha, rng);
  std::uniform_int_distribution<std::size_t> depth_dist(1, cfg.max_depth);
  std::uniform_int_distribution<std::size_t> op_dist(0, cfg.ops.size() - 1);

  Tensor mix(image.shape());
  for (std::size_t i = 0; i < cfg.width; ++i) {
    Tensor chain = image;
    const std::size_t depth = depth_dist(rng);
    for (std::size_t d = 0; d < depth; ++d) {
      const auto kind = cfg.ops[op_dist(rng)];
      chain = primitive_transform(chain, kind, sample_magnitude(kind, cfg.severity, image.shape(), rng));
    }
    for (std::size_t j = 0; j < mix.size(); ++j) mix[j] += weights[i] * chain[j];
  }
  Tensor out(image.shape());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = std::clamp((1.0 - m) * image[j] + m * mix[j], 0.0, 1.0);
  }
  return out;
}

AugmentedTriple augmix(const Tensor& image, const AugmixConfig& cfg, Rng& rng) {
  AugmentedTriple t;
  t.clean = image;
  t.aug1 = augmix_draw(image, cfg, rng);
  t.aug2 = augmix_draw(image, cfg, rng);
  return t;
}

// --------------------------------------------------- phase randomization

RealGrid phase_randomize(const RealGrid& image, Rng& rng, double* imaginary_residue) {
  for (double v : image.data) {
    if (!std::isfinite(v)) throw NumericError("phase_randomize: non-finite input pixel");
  }
  const std::size_t h = image.rows;
  const std::size_t w = image.cols;
  const ComplexGrid spectrum = fft2d(image);
  ComplexGrid randomized(h, w);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t idx = r * w + c;
      const std::size_t partner = ((h - r) % h) * w + (w - c) % w;
      if (idx == partner) {
        randomized.data[idx] = {spectrum.data[idx].real(), 0.0};
      } else if (idx < partner) {
        const auto z = std::polar(std::abs(spectrum.data[idx]), phase(rng));
        randomized.data[idx] = z;
        randomized.data[partner] = std::conj(z);
      }
    }
  }
  const ComplexGrid back = ifft2d(randomized);
  RealGrid out(h, w);
  double residue = 0.0;
  for (std::size_t i = 0; i < back.size(); ++i) {
    residue = std::max(residue, std::abs(back.data[i].imag()));
    out.data[i] = back.data[i].real();
  }
  if (imaginary_residue != nullptr) *imaginary_residue = residue;
  if (residue >= 1e-9) {
    throw SymmetryError("phase_randomize: imaginary residue " + std::to_string(residue) +
                        " exceeds 1e-9");
  }
  return out;
}

SpectrumCheck compare_spectra(const RealGrid& source, const RealGrid& output) {
  if (source.rows != output.rows || source.cols != output.cols) {
    throw ContractError("compare_spectra: grid sizes differ");
  }
  const auto a = fft2d(source);
  const auto b = fft2d(output);
  double peak = 0.0;
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    peak = std::max(peak, std::abs(a.data[i]));
    diff = std::max(diff, std::abs(std::abs(a.data[i]) - std::abs(b.data[i])));
  }
  const double n = static_cast<double>(source.size());
  const double mean_a = std::accumulate(source.data.begin(), source.data.end(), 0.0) / n;
  const double mean_b = std::accumulate(output.data.begin(), output.data.end(), 0.0) / n;
  return {peak > 0.0 ? diff / peak : diff, std::abs(mean_a - mean_b)};
}

// ------------------------------------------------------------------- blend

Tensor blend(const Tensor& image, const Tensor& overlay, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError("blend: alpha " + std::to_string(alpha) + " outside [0,1]");
  }
  const auto& s = image.shape();
  const auto& o = overlay.shape();
  if (o.n != 1 || o.h != s.h || o.w != s.w || (o.c != 1 && o.c != s.c)) {
    throw ContractError("blend: overlay " + o.str() + " does not broadcast to " + s.str());
  }
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t oc = o.c == 1 ? 0 : c;
      for (std::size_t p = 0; p < s.plane(); ++p) {
        const std::size_t i = (n * s.c + c) * s.plane() + p;
        out[i] = std::clamp((1.0 - alpha) * image[i] + alpha * overlay[oc * s.plane() + p], 0.0, 1.0);
      }
    }
  }
  return out;
}

Tensor fit_overlay(const RealGrid& source, std::size_t height, std::size_t width, Rng& rng) {
  if (source.size() == 0) throw ContractError("fit_overlay: empty overlay source");
  Tensor out({1, 1, height, width});
  if (source.rows >= height && source.cols >= width) {
    std::uniform_int_distribution<std::size_t> py(0, source.rows - height);
    std::uniform_int_distribution<std::size_t> px(0, source.cols - width);
    const std::size_t y0 = py(rng);
    const std::size_t x0 = px(rng);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) out.at(0, 0, y, x) = source(y0 + y, x0 + x);
    }
    return out;
  }
  const double sy = height > 1 ? static_cast<double>(source.rows - 1) / static_cast<double>(height - 1) : 0.0;
  const double sx = width > 1 ? static_cast<double>(source.cols - 1) / static_cast<double>(width - 1) : 0.0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      out.at(0, 0, y, x) = bilinear(source.data.data(), source.rows, source.cols,
                                    static_cast<double>(y) * sy, static_cast<double>(x) * sx);
    }
  }
  return out;
}

// ------------------------------------------------- texture/noise dataset

std::size_t Manifest::generated() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.skipped; }));
}

void Manifest::write_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << "name\ttexture_path\tnoise_path\tseed\n";
  for (const auto& e : entries) {
    out << e.name << '\t' << e.texture_path << '\t' << e.noise_path << '\t' << e.seed << '\n';
  }
}

namespace {

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

Manifest generate_texture_noise_dataset(const std::filesystem::path& texture_dir,
                                        const std::filesystem::path& out_dir, std::uint64_t seed) {
  if (!std::filesystem::is_directory(texture_dir)) {
    throw IoError("texture directory '" + texture_dir.string() + "' does not exist");
  }
  std::filesystem::create_directories(out_dir / "textures");
  std::filesystem::create_directories(out_dir / "noise");

  Manifest manifest;
  std::vector<std::string> seen;
  for (const auto& file : sorted_files(texture_dir)) {
    ManifestEntry e;
    e.name = file.stem().string();
    e.seed = derive_seed(seed, hash_name(e.name));
    if (std::find(seen.begin(), seen.end(), e.name) != seen.end()) {
      e.skipped = true;
      e.reason = "duplicate name";
    } else {
      try {
        const Image8 gray = to_image8(to_gray_grid(read_png(file)));
        const RealGrid texture = to_gray_grid(gray);
        Rng rng(e.seed);
        const RealGrid noise = phase_randomize(texture, rng);
        e.check = compare_spectra(texture, noise);
        e.texture_path = "textures/" + e.name + ".png";
        e.noise_path = "noise/" + e.name + ".png";
        write_png(out_dir / e.texture_path, gray);
        write_png(out_dir / e.noise_path, to_image8(noise));
        seen.push_back(e.name);
      } catch (const SymmetryError& err) {
        e.skipped = true;
        e.failed = true;
        e.reason = err.what();
      } catch (const Error& err) {
        e.skipped = true;
        e.reason = err.what();
      }
    }
    if (e.skipped) {
      e.texture_path = file.string();
      e.noise_path = "SKIPPED";
    }
    manifest.entries.push_back(std::move(e));
  }
  manifest.write_tsv(out_dir / "manifest.tsv");
  return manifest;
}

std::vector<RealGrid> load_gray_pool(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("overlay directory '" + dir.string() + "' does not exist");
  }
  std::vector<RealGrid> pool;
  for (const auto& file : sorted_files(dir)) {
    if (file.extension() == ".png") pool.push_back(to_gray_grid(read_png(file)));
  }
  return pool;
}

}  // namespace grcnn
