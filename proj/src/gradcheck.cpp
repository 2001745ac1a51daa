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

#include "grcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "grcnn/error.hpp"
#include "grcnn/grcl.hpp"
#include "grcnn/kernels.hpp"
#include "grcnn/network.hpp"
#include "grcnn/random.hpp"

namespace grcnn {

GradScope parse_grad_scope(const std::string& name) {
  if (name == "kernel") return GradScope::kernel;
  if (name == "grcl") return GradScope::grcl;
  if (name == "network") return GradScope::network;
  throw ConfigError("unknown grad-check scope '" + name + "' (expected kernel, grcl or network)");
}

std::string to_string(GradScope scope) {
  switch (scope) {
    case GradScope::kernel: return "kernel";
    case GradScope::grcl: return "grcl";
    case GradScope::network: return "network";
  }
  return "kernel";
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor, floor});
  return std::abs(analytic - numeric) / scale;
}

bool GradCheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed(); });
}

double GradCheckReport::max_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradCheckReport::to_csv() const {
  std::ostringstream out;
  out << "group,max_rel_error,checked,skipped,tolerance,status\n";
  for (const auto& e : entries) {
    char err[32], tol[32];
    std::snprintf(err, sizeof err, "%.3e", e.max_rel_error);
    std::snprintf(tol, sizeof tol, "%.0e", e.tolerance);
    out << e.group << ',' << err << ',' << e.checked << ',' << e.skipped << ',' << tol << ','
        << (e.passed() ? "PASS" : "FAIL") << '\n';
  }
  return out.str();
}

namespace {

using Signature = std::vector<std::uint8_t>;

class Recorder {
 public:
  Recorder(double tolerance, bool corrupt) : tolerance_(tolerance), corrupt_(corrupt) {}

  GradCheckEntry& entry(const std::string& group) {
    auto [it, inserted] = entries_.try_emplace(group);
    if (inserted) {
      it->second.group = group;
      it->second.tolerance = tolerance_;
      order_.push_back(group);
    }
    return it->second;
  }

  /// Scores one tensor's checked coordinates against a shared scale floor.
  void compare(const std::string& group, std::vector<double> analytic, const std::vector<double>& numeric) {
    auto& e = entry(group);
    double scale = 0.0;
    for (double n : numeric) scale = std::max(scale, std::abs(n));
    const double floor = kTensorScaleFraction * scale;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      if (corrupt_) analytic[i] *= 1.01;
      e.max_rel_error = std::max(e.max_rel_error, relative_error(analytic[i], numeric[i], floor));
      ++e.checked;
    }
  }

  void skip(const std::string& group) { ++entry(group).skipped; }

  std::vector<GradCheckEntry> take() {
    std::vector<GradCheckEntry> out;
    for (const auto& g : order_) out.push_back(entries_.at(g));
    return out;
  }

 private:
  double tolerance_;
  bool corrupt_;
  std::map<std::string, GradCheckEntry> entries_;
  std::vector<std::string> order_;
};

void fill_normal(std::span<double> v, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> d(mean, stddev);
  for (auto& x : v) x = d(rng);
}

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  fill_normal(t.values(), rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

/// Compares every coordinate of `target` against central differences of
/// `eval`, which must read `target` in place.
void check_all(Recorder& rec, const std::string& group, std::span<double> target,
               std::span<const double> analytic, const std::function<double()>& eval, double eps) {
  const std::vector<double> start(target.begin(), target.end());
  const ScalarFunction f = [&](std::span<const double> p) {
    std::copy(p.begin(), p.end(), target.begin());
    return eval();
  };
  const auto numeric = finite_difference_gradient(f, start, eps);
  std::copy(start.begin(), start.end(), target.begin());
  rec.compare(group, std::vector<double>(analytic.begin(), analytic.end()), numeric);
}

/// Same for up to `wanted` coordinates taken in order from `candidates`,
/// skipping any whose two evaluations see different ReLU activation
/// patterns and moving on to the next candidate.
void check_coords(Recorder& rec, const std::string& group, std::span<double> target,
                  std::span<const double> analytic, std::span<const std::size_t> candidates,
                  std::size_t wanted, const std::function<double(Signature&)>& eval, double eps) {
  const std::vector<double> start(target.begin(), target.end());
  std::vector<double> a, n;
  for (std::size_t i : candidates) {
    if (a.size() == wanted) break;
    std::vector<Signature> seen;
    const ScalarFunction f = [&](std::span<const double> p) {
      std::copy(p.begin(), p.end(), target.begin());
      Signature sig;
      const double v = eval(sig);
      seen.push_back(std::move(sig));
      return v;
    };
    const std::size_t one[] = {i};
    const auto numeric = finite_difference_gradient(f, start, eps, one);
    std::copy(start.begin(), start.end(), target.begin());
    if (seen.size() == 2 && seen[0] != seen[1]) {
      rec.skip(group);
      continue;
    }
    a.push_back(analytic[i]);
    n.push_back(numeric[0]);
  }
  rec.compare(group, std::move(a), n);
}

void append_relu_signature(const ConvBlockCache& c, Signature& sig) {
  if (!c.relu) return;
  for (double v : c.output.values()) sig.push_back(v > 0.0 ? 1 : 0);
}

void append_relu_signature(const GrclCache& c, Signature& sig) {
  append_relu_signature(c.a0, sig);
  for (const auto& s : c.steps) append_relu_signature(s.a, sig);
}

// ------------------------------------------------------------ kernel suite

void kernel_suite(Recorder& rec, std::uint64_t seed, const GradCheckOptions& opt) {
  const double eps = opt.eps;
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    Rng rng(derive_seed(seed, trial, 1));
    std::uniform_int_distribution<std::size_t> small(1, 3);
    std::uniform_int_distribution<std::size_t> side(4, 6);

    {  // convolution
      ConvSpec spec;
      Shape in;
      if (trial == 0) {
        spec = ConvSpec{3, 2, 3, 3, 1, 1, 1, 1};
        in = {2, 3, 5, 5};
      } else {
        const std::size_t k = std::bernoulli_distribution(0.5)(rng) ? 3 : 1;
        const std::size_t s = std::bernoulli_distribution(0.5)(rng) ? 2 : 1;
        spec = ConvSpec{small(rng), small(rng), k, k, s, s, k / 2, k / 2};
        in = {2, spec.in_channels, side(rng), side(rng)};
      }
      Tensor x = random_tensor(in, rng);
      Tensor w = random_tensor(spec.weight_shape(), rng);
      std::vector<double> b(spec.out_channels);
      fill_normal(b, rng);
      ConvCache cache;
      const Tensor y = conv2d(x, w, b, spec, cache);
      const Tensor r = random_tensor(y.shape(), rng);
      const auto g = conv2d_backward(cache, r);
      auto eval = [&] { return dot(conv2d(x, w, b, spec), r); };
      check_all(rec, "conv2d.input", x.values(), g.d_input.values(), eval, eps);
      check_all(rec, "conv2d.weights", w.values(), g.d_weights.values(), eval, eps);
      check_all(rec, "conv2d.bias", b, g.d_bias, eval, eps);
    }

    for (Phase phase : {Phase::train, Phase::eval}) {  // batch norm
      const std::string name = phase == Phase::train ? "batch_norm.train" : "batch_norm.eval";
      const std::size_t c = small(rng);
      Tensor x = random_tensor({3, c, 3, 3}, rng);
      BatchNormState st = BatchNormState::fresh(c);
      std::uniform_real_distribution<double> pos(0.5, 2.0);
      for (auto& v : st.gamma) v = pos(rng);
      fill_normal(st.beta, rng);
      fill_normal(st.running_mean, rng);
      for (auto& v : st.running_var) v = pos(rng);
      BatchNormCache cache;
      const Tensor y = batch_norm(x, st, phase, cache).output;
      const Tensor r = random_tensor(y.shape(), rng);
      const auto g = batch_norm_backward(cache, r);
      auto eval = [&] { return dot(batch_norm(x, st, phase).output, r); };
      check_all(rec, name + ".input", x.values(), g.d_input.values(), eval, eps);
      check_all(rec, name + ".gamma", st.gamma, g.d_gamma, eval, eps);
      check_all(rec, name + ".beta", st.beta, g.d_beta, eval, eps);
    }

    for (Activation kind : {Activation::relu, Activation::sigmoid}) {
      Tensor x = random_tensor({2, 2, 3, 3}, rng);
      for (auto& v : x.values()) {
        if (std::abs(v) < 0.01) v = v < 0 ? -0.5 : 0.5;  // keep clear of the ReLU kink
      }
      const Tensor y = activation(x, kind);
      const Tensor r = random_tensor(y.shape(), rng);
      const Tensor g = activation_backward(y, r, kind);
      auto eval = [&] { return dot(activation(x, kind), r); };
      check_all(rec, kind == Activation::relu ? "relu" : "sigmoid", x.values(), g.values(), eval, eps);
    }

    {  // hadamard
      Tensor a = random_tensor({2, 2, 3, 3}, rng);
      Tensor b = random_tensor(a.shape(), rng);
      const Tensor r = random_tensor(a.shape(), rng);
      const auto [da, db] = hadamard_backward(a, b, r);
      auto eval = [&] { return dot(hadamard(a, b), r); };
      check_all(rec, "hadamard.a", a.values(), da.values(), eval, eps);
      check_all(rec, "hadamard.b", b.values(), db.values(), eval, eps);
    }

    {  // linear and pooling
      const std::size_t in = small(rng) + 2;
      const std::size_t out = small(rng) + 1;
      Tensor x = random_tensor({3, in, 1, 1}, rng);
      Tensor w = random_tensor({out, in, 1, 1}, rng);
      std::vector<double> b(out);
      fill_normal(b, rng);
      const Tensor r = random_tensor({3, out, 1, 1}, rng);
      const auto g = linear_backward(x, w, r);
      auto eval = [&] { return dot(linear(x, w, b), r); };
      check_all(rec, "linear.input", x.values(), g.d_input.values(), eval, eps);
      check_all(rec, "linear.weights", w.values(), g.d_weights.values(), eval, eps);
      check_all(rec, "linear.bias", b, g.d_bias, eval, eps);

      Tensor p = random_tensor({2, small(rng), side(rng), side(rng)}, rng);
      const Tensor rp = random_tensor({2, p.shape().c, 1, 1}, rng);
      const Tensor gp = global_avg_pool_backward(p.shape(), rp);
      auto eval_p = [&] { return dot(global_avg_pool(p), rp); };
      check_all(rec, "global_avg_pool", p.values(), gp.values(), eval_p, eps);
    }

    {  // softmax and cross-entropy
      const std::size_t k = small(rng) + 2;
      Tensor z = random_tensor({3, k, 1, 1}, rng);
      const Tensor r = random_tensor(z.shape(), rng);
      const Tensor gs = softmax_backward(softmax(z), r);
      auto eval_s = [&] { return dot(softmax(z), r); };
      check_all(rec, "softmax", z.values(), gs.values(), eval_s, eps);

      Tensor labels(z.shape());
      for (std::size_t n = 0; n < 3; ++n) {
        const auto row = sample_dirichlet(k, 1.0, rng);
        std::copy(row.begin(), row.end(), labels.data() + n * k);
      }
      const auto ce = softmax_cross_entropy(z, labels);
      auto eval_ce = [&] { return softmax_cross_entropy(z, labels).loss; };
      check_all(rec, "softmax_cross_entropy", z.values(), ce.d_logits.values(), eval_ce, eps);
    }
  }
}

// -------------------------------------------------------------- GRCL suite

void randomize_affine(std::span<ParamSlot> slots, Rng& rng) {
  std::uniform_real_distribution<double> gamma(0.5, 1.5);
  std::normal_distribution<double> beta(0.0, 0.2);
  for (auto& s : slots) {
    if (s.name.ends_with(".gamma")) {
      for (auto& v : s.values) v = gamma(rng);
    } else if (s.name.ends_with(".beta")) {
      for (auto& v : s.values) v = beta(rng);
    }
  }
}

void grcl_suite(Recorder& rec, std::uint64_t seed, const GradCheckOptions& opt) {
  struct Variant {
    const char* name;
    bool tie;
    GateMode mode;
  };
  const Variant variants[] = {{"tied", true, GateMode::learned},
                              {"untied", false, GateMode::learned},
                              {"ablated", true, GateMode::ablated},
                              {"open", true, GateMode::saturated_open}};
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    for (std::size_t v = 0; v < std::size(variants); ++v) {
      const auto& var = variants[v];
      Rng rng(derive_seed(seed, trial, 100 + v));
      GrclShape shape{4, 4, 3, var.tie, 3, 3, 1};
      GrclParams params = make_grcl(shape, rng);
      const std::string prefix = std::string("grcl[") + var.name + "]";
      auto slots = parameter_slots(params, prefix);
      randomize_affine(slots, rng);
      Tensor u = random_tensor({2, 4, 8, 8}, rng);
      const auto fwd = grcl_forward(u, params, var.mode, Phase::train);
      const Tensor r = random_tensor(fwd.output.shape(), rng);
      const auto g = grcl_backward(params, fwd.cache, r);
      const auto grad_slots = parameter_slots(g.params, prefix);

      auto eval = [&](Signature& sig) {
        const auto res = grcl_forward(u, params, var.mode, Phase::train);
        append_relu_signature(res.cache, sig);
        return dot(res.output, r);
      };
      for (std::size_t i = 0; i < slots.size(); ++i) {
        std::vector<std::size_t> coords(slots[i].values.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        check_coords(rec, slots[i].name, slots[i].values, grad_slots[i].values, coords, coords.size(), eval,
                     opt.eps);
      }
      std::vector<std::size_t> coords(u.size());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
      std::shuffle(coords.begin(), coords.end(), rng);
      check_coords(rec, prefix + ".input", u.values(), g.d_input.values(), coords, 64, eval, opt.eps);
    }
  }
}

// ----------------------------------------------------------- network suite

void network_suite(Recorder& rec, std::uint64_t seed, const GradCheckOptions& opt) {
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    Rng rng(derive_seed(seed, trial, 200));
    Network net = build_grcnn(GrcnnConfig::tiny(), rng);
    auto slots = parameter_slots(net);
    randomize_affine(slots, rng);
    Tensor x({2, 3, 32, 32});
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    for (auto& v : x.values()) v = pixel(rng);
    const std::size_t k = net.config.num_classes;
    Tensor labels({2, k, 1, 1});
    for (std::size_t n = 0; n < 2; ++n) {
      const auto row = sample_dirichlet(k, 1.0, rng);
      std::copy(row.begin(), row.end(), labels.data() + n * k);
    }
    const auto fwd = network_forward(net, x, Phase::train);
    const auto loss = softmax_cross_entropy(fwd.logits, labels);
    const auto g = network_backward(net, fwd.cache, loss.d_logits, true);
    const auto grad_slots = parameter_slots(g.params);

    auto eval = [&](Signature& sig) {
      const auto out = network_forward(net, x, Phase::train);
      for (const auto& layer : out.cache.layers) {
        std::visit([&](const auto& c) { append_relu_signature(c, sig); }, layer);
      }
      return softmax_cross_entropy(out.logits, labels).loss;
    };
    // Up to sixteen candidates per wanted coordinate, so kink skips are refilled.
    auto sample = [&](std::size_t size) {
      std::vector<std::size_t> coords(size);
      std::iota(coords.begin(), coords.end(), std::size_t{0});
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(std::min(size, 16 * opt.coords_per_tensor));
      return coords;
    };
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto coords = sample(slots[i].values.size());
      check_coords(rec, slots[i].name, slots[i].values, grad_slots[i].values, coords, opt.coords_per_tensor,
                   eval, opt.eps);
    }
    const auto coords = sample(x.size());
    check_coords(rec, "input", x.values(), g.d_input.values(), coords, opt.coords_per_tensor, eval, opt.eps);
  }
}

}  // namespace

GradCheckReport grad_check(GradScope scope, std::uint64_t seed, const GradCheckOptions& options) {
  if (options.trials == 0) throw ConfigError("grad-check needs at least one trial");
  GradCheckReport report;
  report.scope = to_string(scope);
  report.seed = seed;
  report.trials = options.trials;
  Recorder rec(scope == GradScope::network ? 1e-4 : 1e-5, options.corrupt_backward);
  switch (scope) {
    case GradScope::kernel: kernel_suite(rec, seed, options); break;
    case GradScope::grcl: grcl_suite(rec, seed, options); break;
    case GradScope::network: network_suite(rec, seed, options); break;
  }
  report.entries = rec.take();
  return report;
}

}  // namespace grcnn
