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

#include "grcnn/probe.hpp"

#include <algorithm>
#include <numeric>

#include "grcnn/error.hpp"

namespace grcnn {
namespace {

void make_positive(Conv& conv) {
  const double w = 1.0 / static_cast<double>(conv.spec.fan_in());
  std::fill(conv.weight.values().begin(), conv.weight.values().end(), w);
  std::fill(conv.bias.begin(), conv.bias.end(), 0.0);
}

void make_identity(BatchNormState& bn) {
  const std::size_t c = bn.channels();
  bn.gamma.assign(c, 1.0);
  bn.beta.assign(c, 0.0);
  bn.running_mean.assign(c, 0.0);
  bn.running_var.assign(c, 1.0 - bn.epsilon);
}

GrclParams surrogate(GrclParams p) {
  for (auto* conv : {&p.a0.conv, &p.c_gate.conv}) make_positive(*conv);
  for (auto* branch : {&p.a_rec, &p.b_rec}) {
    for (auto& conv : branch->convs) make_positive(conv);
  }
  for_each_batch_norm(p, [](BatchNormState& bn) { make_identity(bn); });
  return p;
}

void check_coordinate(const Shape& out, std::size_t y, std::size_t x) {
  if (y >= out.h || x >= out.w) {
    throw ContractError("receptive_field_probe: output coordinate (" + std::to_string(y) + "," +
                        std::to_string(x) + ") outside output " + std::to_string(out.h) + "x" +
                        std::to_string(out.w));
  }
}

Tensor one_hot_at(const Shape& shape, std::size_t y, std::size_t x) {
  Tensor d(shape);
  d.at(0, 0, y, x) = 1.0;
  return d;
}

SupportMap support_of(const Tensor& d_input) {
  const auto& s = d_input.shape();
  SupportMap m{s.h, s.w, std::vector<std::uint8_t>(s.plane(), 0)};
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t p = 0; p < s.plane(); ++p) {
      if (d_input[c * s.plane() + p] != 0.0) m.mask[p] = 1;
    }
  }
  return m;
}

}  // namespace

std::size_t SupportMap::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::size_t SupportMap::extent_rows() const {
  std::size_t lo = rows, hi = 0;
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      if (at(y, x)) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
    }
  }
  return lo > hi ? 0 : hi - lo + 1;
}

std::size_t SupportMap::extent_cols() const {
  std::size_t lo = cols, hi = 0;
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      if (at(y, x)) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
  }
  return lo > hi ? 0 : hi - lo + 1;
}

double SupportMap::radius() const {
  const auto extent = std::max(extent_rows(), extent_cols());
  return extent == 0 ? 0.0 : (static_cast<double>(extent) - 1.0) / 2.0;
}

bool SupportMap::contains(const SupportMap& other) const {
  if (other.rows != rows || other.cols != cols) return false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (other.mask[i] && !mask[i]) return false;
  }
  return true;
}

SupportMap receptive_field_probe(const ConvSpec& spec, std::size_t height, std::size_t width,
                                 std::size_t y, std::size_t x) {
  Conv conv = make_conv(spec, false);
  make_positive(conv);
  const Tensor input({1, spec.in_channels, height, width}, 1.0);
  ConvCache cache;
  const Tensor out = conv2d(input, conv.weight, conv.bias, spec, cache);
  check_coordinate(out.shape(), y, x);
  return support_of(conv2d_backward(cache, one_hot_at(out.shape(), y, x)).d_input);
}

SupportMap receptive_field_probe(const GrclParams& block, std::size_t height, std::size_t width,
                                 std::size_t y, std::size_t x) {
  const GrclParams p = surrogate(block);
  const Tensor input({1, p.in_channels(), height, width}, 1.0);
  const auto r = grcl_forward(input, p, GateMode::learned, Phase::eval);
  check_coordinate(r.output.shape(), y, x);
  return support_of(grcl_backward(p, r.cache, one_hot_at(r.output.shape(), y, x)).d_input);
}

SupportMap receptive_field_probe(const Network& net, std::size_t layer_count, std::size_t height,
                                 std::size_t width, std::size_t y, std::size_t x) {
  Network s = net;
  for (auto& layer : s.layers) {
    if (auto* block = std::get_if<ConvBlock>(&layer.body)) {
      make_positive(block->conv);
      make_identity(block->bn);
    } else {
      layer.body = surrogate(std::get<GrclParams>(layer.body));
    }
  }
  const Tensor input({1, s.config.input_channels, height, width}, 1.0);
  const auto f = forward_features(s, input, Phase::eval, GateMode::learned, layer_count);
  check_coordinate(f.features.shape(), y, x);
  return support_of(features_backward(s, f.cache, one_hot_at(f.features.shape(), y, x), true).d_input);
}

}  // namespace grcnn
