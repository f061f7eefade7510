#include "srdnet/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

#include "srdnet/autodiff.hpp"
#include "srdnet/blocks.hpp"
#include "srdnet/frequency.hpp"
#include "srdnet/model.hpp"
#include "srdnet/ops.hpp"

namespace srdnet {

namespace {

Tensor perturbed(const Tensor& t, Index j, double delta) {
  Vector v = t.values();
  v[j] += delta;
  return Tensor(t.shape(), std::move(v));
}

double eval_at(const LossFn& loss, std::vector<Tensor> inputs, std::size_t i, Index j, double delta) {
  inputs[i] = perturbed(inputs[i], j, delta);
  return loss(inputs).item();
}

}  // namespace

GradCheckResult check_gradient(const std::string& name, const LossFn& loss, std::vector<Tensor> inputs, Rng& rng,
                               const GradCheckOptions& opts) {
  for (Tensor& t : inputs) t = t.as_leaf(true);
  const Tensor base = loss(inputs);
  const double f0 = base.item();
  const Gradients grads = backward(base);

  // Probe only inputs the loss depends on.
  std::vector<std::size_t> used;
  Index total = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (grads.find(inputs[i])) {
      used.push_back(i);
      total += inputs[i].size();
    }
  }
  if (total == 0) throw UsageError("check_gradient: the loss depends on no input");

  GradCheckResult r;
  r.name = name;
  const double h = opts.step;
  while (r.probes < opts.probes) {
    Index flat = rng.below(total);
    std::size_t u = 0;
    while (flat >= inputs[used[u]].size()) flat -= inputs[used[u++]].size();
    const std::size_t i = used[u];
    const Index j = flat;

    const double analytic = grads.of(inputs[i])[j];
    const double fp = eval_at(loss, inputs, i, j, h);
    const double fm = eval_at(loss, inputs, i, j, -h);
    const double numeric = (fp - fm) / (2.0 * h);
    const double diff = std::abs(analytic - numeric);
    const double err = diff / std::max({std::abs(analytic), std::abs(numeric), opts.floor});
    if (err >= opts.tolerance) {
      const double right = (fp - f0) / h, left = (f0 - fm) / h;
      if (std::abs(right - left) >= diff && r.kinks < opts.probes) {
        ++r.kinks;
        continue;
      }
    }
    r.max_error = std::max(r.max_error, err);
    if (std::max(std::abs(analytic), std::abs(numeric)) < opts.floor) ++r.flat;
    ++r.probes;
  }
  r.passed = r.max_error < opts.tolerance;
  return r;
}

GradCheckResult check_output_gradient(const std::string& name, const OutputFn& f, std::vector<Tensor> inputs,
                                      Rng& rng, const GradCheckOptions& opts) {
  const Tensor sample = f(inputs);
  const Tensor projection = uniform(sample.shape(), rng, -1.0, 1.0);
  const LossFn loss = [&](std::span<const Tensor> in) { return sum(f(in) * projection); };
  return check_gradient(name, loss, std::move(inputs), rng, opts);
}

std::string format_result(const GradCheckResult& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-24s %s probes=%lld flat=%lld kinks=%lld max_rel_err=%.3e", r.name.c_str(),
                r.passed ? "ok  " : "FAIL", static_cast<long long>(r.probes), static_cast<long long>(r.flat),
                static_cast<long long>(r.kinks), r.max_error);
  return buf;
}

// Suite -----------------------------------------------------------------------

namespace {

// Flatten block parameters to a tensor list and back, in a fixed order.
template <typename Fn> void each(Conv2dLayer& l, Fn& fn) { fn(l.weight); fn(l.bias); }
template <typename Fn> void each(Conv3dLayer& l, Fn& fn) { fn(l.weight); fn(l.bias); }
template <typename Fn> void each(TransposedConv2dLayer& l, Fn& fn) { fn(l.weight); fn(l.bias); }
template <typename Fn> void each(SepConv3dLayer& l, Fn& fn) { each(l.spatial, fn); each(l.spectral, fn); }
template <typename Fn> void each(Subnet& s, Fn& fn) { for (auto& l : s) each(l, fn); }

template <typename Fn>
void each(IgmParams& p, Fn& fn) {
  each(p.entry, fn);
  each(p.sgb_a, fn);
  each(p.sgb_b, fn);
  each(p.cb, fn);
  each(p.fuse, fn);
}

template <typename Fn>
void each(HslParams& p, Fn& fn) {
  for (Conv2dLayer* l : {&p.query, &p.key, &p.value, &p.fusion, &p.down1, &p.down2}) each(*l, fn);
}

template <typename Fn>
void each(Unit3dParams& p, Fn& fn) {
  each(p.entry, fn);
  for (auto& u : p.units) each(u, fn);
  each(p.fuse, fn);
}

template <typename Fn>
void each(PamParams& p, Fn& fn) {
  if (p.igm) each(*p.igm, fn);
  if (p.hsl) each(*p.hsl, fn);
  if (p.post2d) each(*p.post2d, fn);
  if (p.unit3d) each(*p.unit3d, fn);
  if (p.feedback) each(*p.feedback, fn);
}

template <typename P>
std::vector<Tensor> flatten(P p) {
  std::vector<Tensor> out;
  auto push = [&](Tensor& t) { out.push_back(t); };
  each(p, push);
  return out;
}

/// Copy of `p` holding `values` in flatten order; returns the count consumed.
template <typename P>
P rebuild(P p, std::span<const Tensor> values, std::size_t& used) {
  auto take = [&](Tensor& t) { t = values[used++]; };
  each(p, take);
  return p;
}

/// Biases start at zero; give them random values so every path is exercised.
template <typename P>
P randomized(P p, Rng& rng) {
  auto fill = [&](Tensor& t) { t = uniform(t.shape(), rng, -0.5, 0.5, true); };
  each(p, fill);
  return p;
}

Tensor rand(const Shape& shape, Rng& rng) { return uniform(shape, rng, -1.0, 1.0); }

class Suite {
 public:
  Suite(Rng& rng, const GradCheckOptions& opts) : rng_(rng), opts_(opts) {}

  void output(const std::string& name, const OutputFn& f, std::vector<Tensor> inputs) {
    results_.push_back(check_output_gradient(name, f, std::move(inputs), rng_, opts_));
  }
  void loss(const std::string& name, const LossFn& f, std::vector<Tensor> inputs) {
    results_.push_back(check_gradient(name, f, std::move(inputs), rng_, opts_));
  }

  /// Checks a block over its input followed by its parameters.
  template <typename P>
  void block(const std::string& name, const P& params, Tensor input,
             std::function<Tensor(const Tensor&, const P&)> f) {
    std::vector<Tensor> inputs{std::move(input)};
    for (Tensor& t : flatten(params)) inputs.push_back(t);
    output(
        name,
        [params, f](std::span<const Tensor> in) {
          std::size_t used = 1;
          return f(in[0], rebuild(params, in, used));
        },
        std::move(inputs));
  }

  Rng& rng() { return rng_; }
  std::vector<GradCheckResult> take() { return std::move(results_); }

 private:
  Rng& rng_;
  GradCheckOptions opts_;
  std::vector<GradCheckResult> results_;
};

void ops_suite(Suite& s) {
  Rng& g = s.rng();
  s.output("add (broadcast)", [](auto in) { return in[0] + in[1]; }, {rand({3, 4, 5}, g), rand({3, 1, 1}, g)});
  s.output("sub (broadcast)", [](auto in) { return in[0] - in[1]; }, {rand({3, 4, 5}, g), rand({1, 4, 5}, g)});
  s.output("mul (broadcast)", [](auto in) { return in[0] * in[1]; }, {rand({3, 4, 5}, g), rand({3, 1, 5}, g)});
  s.output("scale", [](auto in) { return scale(in[0], -1.7); }, {rand({4, 5}, g)});
  s.output("abs", [](auto in) { return abs(in[0]); }, {rand({4, 5}, g)});
  s.output("square", [](auto in) { return square(in[0]); }, {rand({4, 5}, g)});
  s.output("sum", [](auto in) { return sum(in[0]); }, {rand({3, 4}, g)});
  s.output("mean", [](auto in) { return mean(in[0]); }, {rand({3, 4}, g)});
  s.output("matmul", [](auto in) { return matmul(in[0], in[1]); }, {rand({3, 4}, g), rand({4, 5}, g)});
  s.output("transpose", [](auto in) { return transpose(in[0]); }, {rand({3, 4}, g)});
  s.output("reshape", [](auto in) { return reshape(in[0], {4, 6}); }, {rand({2, 3, 4}, g)});
  s.output("concat axis 0", [](auto in) { return concat({in[0], in[1]}, 0); }, {rand({2, 3, 4}, g), rand({3, 3, 4}, g)});
  s.output("concat axis 2", [](auto in) { return concat({in[0], in[1]}, 2); }, {rand({2, 3, 4}, g), rand({2, 3, 2}, g)});
  s.output("slice", [](auto in) { return slice(in[0], 1, 1, 2); }, {rand({2, 4, 3}, g)});

  s.block<Conv2dLayer>("conv2d 3x3", randomized(make_conv2d(3, 4, 3, g), g), rand({3, 5, 6}, g),
                       [](const Tensor& x, const Conv2dLayer& l) { return conv2d(x, l); });
  s.block<Conv2dLayer>("conv2d 1x1", randomized(make_conv2d(4, 2, 1, g), g), rand({4, 3, 5}, g),
                       [](const Tensor& x, const Conv2dLayer& l) { return conv2d(x, l); });
  s.block<Conv3dLayer>("conv3d 3x3x3", randomized(make_conv3d(2, 3, 3, 3, 3, g), g), rand({2, 4, 4, 5}, g),
                       [](const Tensor& x, const Conv3dLayer& l) { return conv3d(x, l); });
  s.block<SepConv3dLayer>("sepconv3d", randomized(make_sepconv3d(2, 3, g), g), rand({2, 4, 5, 4}, g),
                          [](const Tensor& x, const SepConv3dLayer& l) { return sepconv3d(x, l); });
  for (Index r : {2, 3}) {
    s.block<TransposedConv2dLayer>("transposed_conv2d x" + std::to_string(r),
                                   randomized(make_transposed_conv2d(3, 2, r, g), g), rand({3, 4, 3}, g),
                                   [](const Tensor& x, const TransposedConv2dLayer& l) {
                                     return transposed_conv2d(x, l);
                                   });
  }

  s.output("relu", [](auto in) { return relu(in[0]); }, {rand({3, 4, 5}, g)});
  s.output("sigmoid", [](auto in) { return sigmoid(scale(in[0], 4.0)); }, {rand({3, 4, 5}, g)});
  s.output("softmax axis 0", [](auto in) { return softmax(in[0], 0); }, {rand({4, 6}, g)});
  s.output("softmax axis 1", [](auto in) { return softmax(in[0], 1); }, {rand({4, 6}, g)});
  s.output("max pool (odd dims)", [](auto in) { return pool2d(PoolKind::max, in[0]); }, {rand({2, 5, 7}, g)});
  s.output("avg pool (odd dims)", [](auto in) { return pool2d(PoolKind::avg, in[0]); }, {rand({2, 5, 7}, g)});
  s.output("bicubic up", [](auto in) { return resize(ResampleKind::bicubic, in[0], 8, 15); }, {rand({2, 4, 5}, g)});
  s.output("bicubic down", [](auto in) { return resize(ResampleKind::bicubic, in[0], 3, 4); }, {rand({2, 7, 8}, g)});
  s.output("bilinear up", [](auto in) { return resize(ResampleKind::bilinear, in[0], 5, 9); }, {rand({2, 2, 4}, g)});
}

void blocks_suite(Suite& s) {
  Rng& g = s.rng();
  const Index c = 4;
  const IgmParams igm = randomized(make_igm(c, 2, g), g);
  const HslParams hsl = randomized(make_hsl(c, g), g);
  Unit3dParams unit3d = randomized(make_unit3d(2, 2, g), g);
  // Keep the single-channel fuse output above the final ReLU.
  unit3d.fuse.bias = constant({1}, 1.0, true);

  s.block<IgmParams>("igm", igm, rand({c, 6, 6}, g), [](const Tensor& x, const IgmParams& p) {
    return igm_forward(x, p);
  });
  s.block<HslParams>("hsl spectral attention", hsl, rand({c, 5, 6}, g), [](const Tensor& x, const HslParams& p) {
    return hsl_spectral_attention(x, p).output;
  });
  s.block<HslParams>("hsl spatial attention", hsl, rand({c, 8, 9}, g), [](const Tensor& x, const HslParams& p) {
    return hsl_spatial_attention(x, p).output;
  });
  {
    const Tensor feedback = rand({c, 8, 8}, g);
    s.block<HslParams>("hsl with feedback", hsl, rand({c, 8, 8}, g),
                       [feedback](const Tensor& x, const HslParams& p) { return hsl_forward(x, feedback, p); });
  }
  s.block<Unit3dParams>("3d branch", unit3d, rand({c, 5, 5}, g), [](const Tensor& x, const Unit3dParams& p) {
    return branch3d_forward(x, p, 2).output;
  });

  PamParams pam;
  pam.igm = igm;
  pam.hsl = hsl;
  pam.post2d = randomized(make_conv2d(c, c, 3, g), g);
  pam.unit3d = unit3d;
  pam.feedback = randomized(make_conv2d(c, c, 1, g), g);
  s.block<PamParams>("pam", pam, rand({c, 8, 8}, g), [](const Tensor& x, const PamParams& p) {
    return pam_forward(x, p, 2);
  });
}

void model_suite(Suite& s, Index scale) {
  Rng& g = s.rng();
  ModelConfig cfg = ModelConfig::make(8, scale);
  cfg.c_feat = 4;
  cfg.c_3d = 2;
  cfg.n_units = 2;
  cfg.igm_width = 2;
  ModelParameters params = init_parameters(cfg, g);
  params.visit([&](const std::string&, Tensor& t) { t = uniform(t.shape(), g, -0.3, 0.3, true); });

  std::vector<Tensor> inputs{uniform({cfg.bands, 8, 8}, g, 0.0, 1.0)};
  for (const Tensor& t : params.tensors()) inputs.push_back(t);
  s.output(
      "model x" + std::to_string(scale),
      [cfg, params](std::span<const Tensor> in) {
        ModelParameters p = params;
        p.assign(in.subspan(1));
        return forward(in[0], cfg, p);
      },
      std::move(inputs));
}

void freq_suite(Suite& s) {
  Rng& g = s.rng();
  for (const Shape& shape : {Shape{1, 2, 2}, Shape{3, 4, 5}, Shape{2, 8, 8}}) {
    const Tensor gt = rand(shape, g), sr = rand(shape, g);
    // With α = 1 the weights are fixed at their values for the current pair.
    const std::vector<RowMatrix> weights = hfl_weights(gt, sr, 1.0);
    s.loss("hfl " + to_string(shape),
           [weights](std::span<const Tensor> in) { return weighted_freq_loss(in[0], in[1], weights); }, {gt, sr});
  }
  // With α = 0 the weights are constant, so the full function is checked.
  const FreqLossConfig flat{0.0, 0.1};
  s.loss("hfl alpha=0", [flat](std::span<const Tensor> in) { return hfl(in[0], in[1], flat); },
         {rand({2, 4, 6}, g), rand({2, 4, 6}, g)});
  s.loss("total loss alpha=0", [flat](std::span<const Tensor> in) { return total_loss(in[0], in[1], flat).total; },
         {rand({2, 4, 4}, g), rand({2, 4, 4}, g)});
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(const std::string& module, std::uint64_t seed,
                                                 const GradCheckOptions& opts) {
  const bool all = module == "all";
  if (!all && module != "ops" && module != "blocks" && module != "model" && module != "freq") {
    throw std::invalid_argument("unknown gradcheck module '" + module + "' (all|ops|blocks|model|freq)");
  }
  Rng rng(seed);
  Suite s(rng, opts);
  if (all || module == "ops") ops_suite(s);
  if (all || module == "blocks") blocks_suite(s);
  if (all || module == "model") {
    model_suite(s, 2);
    model_suite(s, 4);
  }
  if (all || module == "freq") freq_suite(s);
  return s.take();
}

}  // namespace srdnet
