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

#include "grcnn/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "grcnn/error.hpp"

namespace grcnn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                        b.shape().str());
  }
}

// Output columns [lo, hi) whose tap at kernel column j lands inside the input.
std::pair<std::size_t, std::size_t> valid_range(std::size_t wo, std::size_t stride, std::size_t j,
                                                std::size_t pad, std::size_t width) {
  std::size_t lo = 0;
  while (lo < wo && lo * stride + j < pad) ++lo;
  std::size_t hi = wo;
  while (hi > lo && (hi - 1) * stride + j >= pad + width) --hi;
  return {lo, hi};
}

// Lowers the whole batch to a (C*kh*kw) x (N*Ho*Wo) matrix.
RowMatrix im2col(const Tensor& input, const ConvSpec& spec, std::size_t ho, std::size_t wo) {
  const auto& s = input.shape();
  const auto k = static_cast<Eigen::Index>(spec.fan_in());
  const std::size_t per_sample = ho * wo;
  const auto cols = static_cast<Eigen::Index>(s.n * per_sample);
  RowMatrix col(k, cols);
  const auto n_samples = static_cast<std::ptrdiff_t>(s.n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < n_samples; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t i = 0; i < spec.kh; ++i) {
        for (std::size_t j = 0; j < spec.kw; ++j) {
          const auto row = static_cast<Eigen::Index>((c * spec.kh + i) * spec.kw + j);
          double* dst = col.data() + row * cols + static_cast<std::size_t>(n) * per_sample;
          const double* plane = input.data() + (static_cast<std::size_t>(n) * s.c + c) * s.plane();
          const auto [x_lo, x_hi] = valid_range(wo, spec.sw, j, spec.pw, s.w);
          for (std::size_t oy = 0; oy < ho; ++oy) {
            double* out = dst + oy * wo;
            const auto iy = static_cast<std::ptrdiff_t>(oy * spec.sh + i) -
                            static_cast<std::ptrdiff_t>(spec.ph);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) {
              std::fill(out, out + wo, 0.0);
              continue;
            }
            std::fill(out, out + x_lo, 0.0);
            std::fill(out + x_hi, out + wo, 0.0);
            const double* src = plane + static_cast<std::size_t>(iy) * s.w + x_lo * spec.sw + j - spec.pw;
            if (spec.sw == 1) {
              std::copy(src, src + (x_hi - x_lo), out + x_lo);
            } else {
              for (std::size_t ox = x_lo; ox < x_hi; ++ox, src += spec.sw) out[ox] = *src;
            }
          }
        }
      }
    }
  }
  return col;
}

void col2im(const RowMatrix& col, const ConvSpec& spec, std::size_t ho, std::size_t wo,
            Tensor& d_input) {
  const auto& s = d_input.shape();
  const std::size_t per_sample = ho * wo;
  const auto cols = col.cols();
  const auto n_samples = static_cast<std::ptrdiff_t>(s.n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < n_samples; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      double* plane = d_input.data() + (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (std::size_t i = 0; i < spec.kh; ++i) {
        for (std::size_t j = 0; j < spec.kw; ++j) {
          const auto row = static_cast<Eigen::Index>((c * spec.kh + i) * spec.kw + j);
          const double* src = col.data() + row * cols + static_cast<std::size_t>(n) * per_sample;
          const auto [x_lo, x_hi] = valid_range(wo, spec.sw, j, spec.pw, s.w);
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * spec.sh + i) -
                            static_cast<std::ptrdiff_t>(spec.ph);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) continue;
            double* dst = plane + static_cast<std::size_t>(iy) * s.w + x_lo * spec.sw + j - spec.pw;
            const double* in = src + oy * wo;
            for (std::size_t ox = x_lo; ox < x_hi; ++ox, dst += spec.sw) *dst += in[ox];
          }
        }
      }
    }
  }
}

void check_conv_args(const Tensor& input, const Tensor& weights, std::span<const double> bias,
                     const ConvSpec& spec) {
  const auto& s = input.shape();
  if (s.c != spec.in_channels) {
    throw ContractError("conv2d: input channels " + std::to_string(s.c) + " != in_channels " +
                        std::to_string(spec.in_channels));
  }
  if (weights.shape() != spec.weight_shape()) {
    throw ContractError("conv2d: weights shape " + weights.shape().str() + " != expected " +
                        spec.weight_shape().str());
  }
  if (!bias.empty() && bias.size() != spec.out_channels) {
    throw ContractError("conv2d: bias length " + std::to_string(bias.size()) +
                        " != out_channels " + std::to_string(spec.out_channels));
  }
  if (spec.sh == 0 || spec.sw == 0) throw ContractError("conv2d: stride must be >= 1");
}

}  // namespace

std::pair<std::size_t, std::size_t> ConvSpec::output_hw(std::size_t h, std::size_t w) const {
  const auto padded_h = static_cast<std::ptrdiff_t>(h + 2 * ph);
  const auto padded_w = static_cast<std::ptrdiff_t>(w + 2 * pw);
  if (padded_h < static_cast<std::ptrdiff_t>(kh)) {
    throw ContractError("conv2d: height " + std::to_string(h) + " too small for kernel height " +
                        std::to_string(kh));
  }
  if (padded_w < static_cast<std::ptrdiff_t>(kw)) {
    throw ContractError("conv2d: width " + std::to_string(w) + " too small for kernel width " +
                        std::to_string(kw));
  }
  return {(h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1};
}

Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const double> bias,
              const ConvSpec& spec) {
  check_conv_args(input, weights, bias, spec);
  const auto& s = input.shape();
  const auto [ho, wo] = spec.output_hw(s.h, s.w);
  Tensor out({s.n, spec.out_channels, ho, wo});
  if (out.empty()) return out;

  const RowMatrix col = im2col(input, spec, ho, wo);
  const ConstMatrixMap w(weights.data(), static_cast<Eigen::Index>(spec.out_channels),
                         static_cast<Eigen::Index>(spec.fan_in()));
  const RowMatrix product = w * col;

  const std::size_t per_sample = ho * wo;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
      const double b = bias.empty() ? 0.0 : bias[co];
      const double* src = product.data() + co * product.cols() + n * per_sample;
      double* dst = out.data() + (n * spec.out_channels + co) * per_sample;
      for (std::size_t p = 0; p < per_sample; ++p) dst[p] = src[p] + b;
    }
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const double> bias,
              const ConvSpec& spec, ConvCache& cache) {
  Tensor out = conv2d(input, weights, bias, spec);
  cache.spec = spec;
  cache.input = input;
  cache.weights = weights;
  cache.has_bias = !bias.empty();
  return out;
}

ConvGrads conv2d_backward(const ConvCache& cache, const Tensor& d_output) {
  const auto& spec = cache.spec;
  const auto& s = cache.input.shape();
  if (cache.weights.shape() != spec.weight_shape() || s.c != spec.in_channels) {
    throw ContractError("conv2d_backward: cache does not match its ConvSpec");
  }
  const auto [ho, wo] = spec.output_hw(s.h, s.w);
  const Shape expected{s.n, spec.out_channels, ho, wo};
  if (d_output.shape() != expected) {
    throw ContractError("conv2d_backward: d_output shape " + d_output.shape().str() +
                        " != forward output shape " + expected.str());
  }

  ConvGrads g;
  g.d_input = Tensor(s);
  g.d_weights = Tensor(spec.weight_shape());
  if (cache.has_bias) g.d_bias.assign(spec.out_channels, 0.0);
  if (d_output.empty()) return g;

  const std::size_t per_sample = ho * wo;
  const auto cout = static_cast<Eigen::Index>(spec.out_channels);
  const auto total = static_cast<Eigen::Index>(s.n * per_sample);
  RowMatrix d_out(cout, total);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
      const double* src = d_output.data() + (n * spec.out_channels + co) * per_sample;
      std::copy(src, src + per_sample, d_out.data() + co * total + n * per_sample);
    }
  }

  if (cache.has_bias) {
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
      double acc = 0.0;
      const double* row = d_out.data() + co * total;
      for (Eigen::Index q = 0; q < total; ++q) acc += row[q];
      g.d_bias[co] = acc;
    }
  }

  const RowMatrix col = im2col(cache.input, spec, ho, wo);
  MatrixMap dw(g.d_weights.data(), cout, static_cast<Eigen::Index>(spec.fan_in()));
  dw.noalias() = d_out * col.transpose();

  const ConstMatrixMap w(cache.weights.data(), cout, static_cast<Eigen::Index>(spec.fan_in()));
  const RowMatrix d_col = w.transpose() * d_out;
  col2im(d_col, spec, ho, wo, g.d_input);
  return g;
}

// ---------------------------------------------------------------- batch norm

BatchNormState BatchNormState::fresh(std::size_t channels) {
  BatchNormState s;
  s.gamma.assign(channels, 1.0);
  s.beta.assign(channels, 0.0);
  s.running_mean.assign(channels, 0.0);
  s.running_var.assign(channels, 1.0);
  return s;
}

void BatchNormState::validate(std::size_t channels) const {
  if (gamma.size() != channels || beta.size() != channels || running_mean.size() != channels ||
      running_var.size() != channels) {
    throw ContractError("batch_norm: parameter lengths must equal channel count " +
                        std::to_string(channels));
  }
  if (!(epsilon > 0.0)) throw ContractError("batch_norm: epsilon must be > 0");
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ContractError("batch_norm: momentum must lie in (0,1)");
  }
  for (std::size_t c = 0; c < channels; ++c) {
    if (running_var[c] < 0.0) {
      throw ContractError("batch_norm: negative running variance in channel " + std::to_string(c));
    }
  }
}

BatchNormResult batch_norm(const Tensor& input, const BatchNormState& state, Phase phase,
                           BatchNormCache& cache) {
  const auto& s = input.shape();
  state.validate(s.c);
  const std::size_t count = s.n * s.plane();
  if (phase == Phase::train && count == 0) {
    throw ContractError("batch_norm: zero-size batch in train mode");
  }

  BatchNormResult r{Tensor(s), state};
  cache.phase = phase;
  cache.shape = s;
  cache.normalized.assign(input.size(), 0.0);
  cache.inv_std.assign(s.c, 0.0);
  cache.gamma = state.gamma;

  const auto channels = static_cast<std::ptrdiff_t>(s.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < channels; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double mean = 0.0;
    double var = 0.0;
    if (phase == Phase::train) {
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* x = input.data() + (n * s.c + c) * s.plane();
        for (std::size_t p = 0; p < s.plane(); ++p) mean += x[p];
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* x = input.data() + (n * s.c + c) * s.plane();
        for (std::size_t p = 0; p < s.plane(); ++p) var += (x[p] - mean) * (x[p] - mean);
      }
      var /= static_cast<double>(count);
      r.state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
      r.state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * var;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + state.epsilon);
    cache.inv_std[c] = inv_std;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t p = 0; p < s.plane(); ++p) {
        const double xhat = (input[base + p] - mean) * inv_std;
        cache.normalized[base + p] = xhat;
        r.output[base + p] = state.gamma[c] * xhat + state.beta[c];
      }
    }
  }
  return r;
}

BatchNormResult batch_norm(const Tensor& input, const BatchNormState& state, Phase phase) {
  BatchNormCache scratch;
  return batch_norm(input, state, phase, scratch);
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& d_output) {
  const auto& s = cache.shape;
  if (d_output.shape() != s) {
    throw ContractError("batch_norm_backward: d_output shape " + d_output.shape().str() +
                        " != input shape " + s.str());
  }
  BatchNormGrads g{Tensor(s), std::vector<double>(s.c, 0.0), std::vector<double>(s.c, 0.0)};
  const double count = static_cast<double>(s.n * s.plane());
  const auto channels = static_cast<std::ptrdiff_t>(s.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < channels; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t p = 0; p < s.plane(); ++p) {
        sum_dy += d_output[base + p];
        sum_dy_xhat += d_output[base + p] * cache.normalized[base + p];
      }
    }
    g.d_beta[c] = sum_dy;
    g.d_gamma[c] = sum_dy_xhat;
    const double gamma = cache.gamma[c];
    const double inv_std = cache.inv_std[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t p = 0; p < s.plane(); ++p) {
        if (cache.phase == Phase::train) {
          g.d_input[base + p] = gamma * inv_std / count *
                                (count * d_output[base + p] - sum_dy -
                                 cache.normalized[base + p] * sum_dy_xhat);
        } else {
          g.d_input[base + p] = gamma * inv_std * d_output[base + p];
        }
      }
    }
  }
  return g;
}

// --------------------------------------------------------------- pointwise

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activation(const Tensor& input, Activation kind) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = kind == Activation::relu ? (input[i] > 0.0 ? input[i] : 0.0) : sigmoid(input[i]);
  }
  return out;
}

Tensor activation_backward(const Tensor& forward_output, const Tensor& d_output,
                           Activation kind) {
  require_same_shape(forward_output, d_output, "activation_backward");
  Tensor d(d_output.shape());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double y = forward_output[i];
    d[i] = kind == Activation::relu ? (y > 0.0 ? d_output[i] : 0.0) : d_output[i] * y * (1.0 - y);
  }
  return d;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

std::pair<Tensor, Tensor> hadamard_backward(const Tensor& a, const Tensor& b, const Tensor& d) {
  require_same_shape(a, b, "hadamard_backward");
  require_same_shape(a, d, "hadamard_backward");
  return {hadamard(d, b), hadamard(d, a)};
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

void add_inplace(Tensor& acc, const Tensor& b) {
  require_same_shape(acc, b, "add_inplace");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

// ------------------------------------------------------------ linear / pool

Tensor linear(const Tensor& input, const Tensor& weights, std::span<const double> bias) {
  const auto& ws = weights.shape();
  const std::size_t features = input.shape().sample();
  if (ws.h != 1 || ws.w != 1 || ws.c != features) {
    throw ContractError("linear: input has " + std::to_string(features) +
                        " features but weights are " + ws.str());
  }
  if (!bias.empty() && bias.size() != ws.n) {
    throw ContractError("linear: bias length " + std::to_string(bias.size()) + " != outputs " +
                        std::to_string(ws.n));
  }
  const auto n = static_cast<Eigen::Index>(input.shape().n);
  const auto in = static_cast<Eigen::Index>(features);
  const auto outf = static_cast<Eigen::Index>(ws.n);
  Tensor out({input.shape().n, ws.n, 1, 1});
  MatrixMap y(out.data(), n, outf);
  y.noalias() = ConstMatrixMap(input.data(), n, in) * ConstMatrixMap(weights.data(), outf, in).transpose();
  if (!bias.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index o = 0; o < outf; ++o) y(i, o) += bias[static_cast<std::size_t>(o)];
    }
  }
  return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weights, const Tensor& d_output) {
  const auto& ws = weights.shape();
  const Shape expected{input.shape().n, ws.n, 1, 1};
  if (d_output.shape() != expected) {
    throw ContractError("linear_backward: d_output shape " + d_output.shape().str() +
                        " != " + expected.str());
  }
  const auto n = static_cast<Eigen::Index>(input.shape().n);
  const auto in = static_cast<Eigen::Index>(ws.c);
  const auto outf = static_cast<Eigen::Index>(ws.n);
  LinearGrads g{Tensor(input.shape()), Tensor(ws), std::vector<double>(ws.n, 0.0)};
  const ConstMatrixMap dy(d_output.data(), n, outf);
  MatrixMap(g.d_input.data(), n, in).noalias() = dy * ConstMatrixMap(weights.data(), outf, in);
  MatrixMap(g.d_weights.data(), outf, in).noalias() =
      dy.transpose() * ConstMatrixMap(input.data(), n, in);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index o = 0; o < outf; ++o) g.d_bias[static_cast<std::size_t>(o)] += dy(i, o);
  }
  return g;
}

Tensor global_avg_pool(const Tensor& input) {
  const auto& s = input.shape();
  if (s.plane() == 0) throw ContractError("global_avg_pool: empty spatial extent");
  Tensor out({s.n, s.c, 1, 1});
  for (std::size_t i = 0; i < s.n * s.c; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < s.plane(); ++p) acc += input[i * s.plane() + p];
    out[i] = acc / static_cast<double>(s.plane());
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& d_output) {
  const Shape expected{input_shape.n, input_shape.c, 1, 1};
  if (d_output.shape() != expected) {
    throw ContractError("global_avg_pool_backward: d_output shape " + d_output.shape().str() +
                        " != " + expected.str());
  }
  Tensor d(input_shape);
  const double scale = 1.0 / static_cast<double>(input_shape.plane());
  for (std::size_t i = 0; i < input_shape.n * input_shape.c; ++i) {
    for (std::size_t p = 0; p < input_shape.plane(); ++p) {
      d[i * input_shape.plane() + p] = d_output[i] * scale;
    }
  }
  return d;
}

// ------------------------------------------------------- softmax / entropy

Tensor softmax(const Tensor& logits) {
  const std::size_t n = logits.shape().n;
  const std::size_t k = logits.shape().sample();
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    const double zmax = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[i * k + j] = std::exp(z[j] - zmax);
      total += p[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= total;
  }
  return p;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& d_probs) {
  require_same_shape(probs, d_probs, "softmax_backward");
  const std::size_t n = probs.shape().n;
  const std::size_t k = probs.shape().sample();
  Tensor d(probs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += probs[i * k + j] * d_probs[i * k + j];
    for (std::size_t j = 0; j < k; ++j) {
      d[i * k + j] = probs[i * k + j] * (d_probs[i * k + j] - dot);
    }
  }
  return d;
}

void validate_distribution_rows(const Tensor& rows, const char* what) {
  const std::size_t n = rows.shape().n;
  const std::size_t k = rows.shape().sample();
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = rows[i * k + j];
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ContractError(std::string(what) + ": row " + std::to_string(i) +
                            " has a negative or non-finite entry");
      }
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ContractError(std::string(what) + ": row " + std::to_string(i) + " sums to " +
                          std::to_string(total) + ", expected 1");
    }
  }
}

LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& soft_labels) {
  require_same_shape(logits, soft_labels, "softmax_cross_entropy");
  validate_distribution_rows(soft_labels, "softmax_cross_entropy labels");
  const std::size_t n = logits.shape().n;
  const std::size_t k = logits.shape().sample();
  if (n == 0) throw ContractError("softmax_cross_entropy: empty batch");
  LossResult r{0.0, softmax(logits)};
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    const double zmax = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(z[j] - zmax);
    const double lse = zmax + std::log(total);
    for (std::size_t j = 0; j < k; ++j) {
      const double y = soft_labels[i * k + j];
      if (y != 0.0) r.loss -= y * (z[j] - lse);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  r.loss *= inv_n;
  for (std::size_t i = 0; i < r.d_logits.size(); ++i) {
    r.d_logits[i] = (r.d_logits[i] - soft_labels[i]) * inv_n;
  }
  return r;
}

// -------------------------------------------------------- finite differences

std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> params, double eps,
                                               std::span<const std::size_t> coords) {
  if (!(eps > 0.0)) throw ContractError("finite_difference_gradient: eps must be > 0");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> grad(coords.size(), 0.0);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const std::size_t i = coords[k];
    if (i >= p.size()) throw ContractError("finite_difference_gradient: coordinate out of range");
    const double original = p[i];
    p[i] = original + eps;
    const double fp = f(p);
    p[i] = original - eps;
    const double fm = f(p);
    p[i] = original;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_difference_gradient: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    grad[k] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> params, double eps) {
  std::vector<std::size_t> coords(params.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  return finite_difference_gradient(f, params, eps, coords);
}

}  // namespace grcnn
