#include "srdnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "srdnet/autodiff.hpp"

namespace srdnet {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (loss.alpha < 0) throw ConfigError("alpha must be >= 0");
  if (loss.beta < 0) throw ConfigError("beta must be >= 0");
  if (patch < kMinInputSide) throw ConfigError("patch must be >= " + std::to_string(kMinInputSide));
  if (patches_per_cube < 1) throw ConfigError("patches per cube must be >= 1");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint interval must be >= 0");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"lr", cfg.lr},
          {"epochs", cfg.epochs},
          {"batch", cfg.batch},
          {"alpha", cfg.loss.alpha},
          {"beta", cfg.loss.beta},
          {"seed", cfg.seed},
          {"patch", cfg.patch},
          {"patches_per_cube", cfg.patches_per_cube},
          {"augment", cfg.augment},
          {"checkpoint_interval", cfg.checkpoint_interval}};
}

std::string format_record(const TrainRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld %lld %.17g %.17g %.17g", static_cast<long long>(r.step),
                static_cast<long long>(r.epoch), r.l1, r.hfl, r.total);
  return buf;
}

TrainRecord parse_record(const std::string& line) {
  std::istringstream is(line);
  TrainRecord r;
  if (!(is >> r.step >> r.epoch >> r.l1 >> r.hfl >> r.total)) {
    throw DecodeError("malformed train record: " + line);
  }
  return r;
}

// Adam ------------------------------------------------------------------------

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.push_back(Vector::Zero(p.size()));
    s.v.push_back(Vector::Zero(p.size()));
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Vector> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::beta1, t);
  const double c2 = 1.0 - std::pow(AdamState::beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Vector& g = grads[i];
    if (g.size() != params[i].size() || state.m[i].size() != g.size()) {
      throw ShapeError("adam_step: gradient " + std::to_string(i) + " does not match its parameter");
    }
    state.m[i] = AdamState::beta1 * state.m[i] + (1.0 - AdamState::beta1) * g;
    state.v[i] = AdamState::beta2 * state.v[i] + (1.0 - AdamState::beta2) * g.cwiseAbs2();
    const Vector update =
        ((state.m[i] / c1).array() / ((state.v[i] / c2).array().sqrt() + AdamState::eps)).matrix();
    params[i] = Tensor(params[i].shape(), params[i].values() - lr * update, true);
  }
}

// Trainer ---------------------------------------------------------------------

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

/// Name of the first tensor holding a non-finite value, in the order data
/// flows through a step.
std::string first_non_finite(const Tensor& lr, const ModelParameters& params, const Tensor& sr,
                             const LossTerms& terms) {
  if (!all_finite(lr.values())) return "input";
  for (const auto& [name, t] : params.named()) {
    if (!all_finite(t.values())) return name;
  }
  if (!all_finite(sr.values())) return "output";
  if (!all_finite(terms.l1.values())) return "l1";
  if (!all_finite(terms.hfl.values())) return "hfl";
  return "total";
}

}  // namespace

Trainer::Trainer(ModelConfig model, ModelParameters params, TrainConfig cfg)
    : model_(std::move(model)), params_(std::move(params)), cfg_(std::move(cfg)) {
  model_.validate();
  cfg_.validate();
  const std::vector<Tensor> tensors = params_.tensors();
  adam_ = AdamState::zeros_like(tensors);
}

TrainRecord Trainer::step(std::span<const PatchPair> batch, Index epoch) {
  if (batch.empty()) throw UsageError("Trainer::step needs at least one sample");
  const auto start = std::chrono::steady_clock::now();
  std::vector<Tensor> tensors = params_.tensors();
  std::vector<Vector> acc;
  for (const Tensor& t : tensors) acc.push_back(Vector::Zero(t.size()));

  double l1 = 0, hfl_sum = 0;
  for (const PatchPair& pair : batch) {
    const Tensor lr = pair.lr.to_tensor();
    const Tensor hr = pair.hr.to_tensor();
    const Tensor sr = forward(lr, model_, params_);
    const LossTerms terms = total_loss(hr, sr, cfg_.loss);
    if (!std::isfinite(terms.total.item())) {
      throw NonFiniteError("non-finite loss at step " + std::to_string(adam_.step + 1) +
                           "; first non-finite tensor: " + first_non_finite(lr, params_, sr, terms));
    }
    const Gradients grads = backward(terms.total);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (const Vector* g = grads.find(tensors[i])) acc[i] += *g;
    }
    l1 += terms.l1.item();
    hfl_sum += terms.hfl.item();
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  const auto named = params_.named();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    acc[i] *= inv;
    if (!all_finite(acc[i])) {
      throw NonFiniteError("non-finite gradient at step " + std::to_string(adam_.step + 1) +
                           "; first non-finite tensor: gradient of " + named[i].first);
    }
  }
  adam_step(tensors, acc, adam_, cfg_.lr);
  params_.assign(tensors);

  TrainRecord r;
  r.step = adam_.step;
  r.epoch = epoch;
  r.l1 = l1 * inv;
  r.hfl = hfl_sum * inv;
  r.total = r.l1 + cfg_.loss.beta * r.hfl;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Checkpoint Trainer::checkpoint(Index epochs_done) const {
  Checkpoint ckpt = make_checkpoint(model_, params_);
  const auto named = params_.named();
  for (std::size_t i = 0; i < named.size(); ++i) {
    ckpt.tensors.push_back({"adam.m." + named[i].first, named[i].second.shape(), adam_.m[i]});
    ckpt.tensors.push_back({"adam.v." + named[i].first, named[i].second.shape(), adam_.v[i]});
  }
  ckpt.meta["train"] = {{"adam_step", adam_.step}, {"epochs_done", epochs_done}, {"config", to_json(cfg_)}};
  return ckpt;
}

Trainer Trainer::resume(const Checkpoint& ckpt, const TrainConfig& cfg) {
  auto [model, params] = load_model(ckpt);
  Trainer t(std::move(model), std::move(params), cfg);
  const auto named = t.params_.named();
  for (std::size_t i = 0; i < named.size(); ++i) {
    const NamedTensor* m = ckpt.find("adam.m." + named[i].first);
    const NamedTensor* v = ckpt.find("adam.v." + named[i].first);
    if (!m || !v) throw DecodeError("checkpoint has no optimizer state for " + named[i].first);
    if (m->values.size() != named[i].second.size() || v->values.size() != named[i].second.size()) {
      throw DecodeError("optimizer state for " + named[i].first + " has the wrong size");
    }
    t.adam_.m[i] = m->values;
    t.adam_.v[i] = v->values;
  }
  t.adam_.step = ckpt.meta.at("train").at("adam_step").get<std::int64_t>();
  return t;
}

Index Trainer::epochs_done(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("train")) throw DecodeError("checkpoint has no training state");
  return ckpt.meta.at("train").at("epochs_done").get<Index>();
}

// Epoch data ------------------------------------------------------------------

namespace {

constexpr std::uint64_t kShuffleSalt = 0x53485546464c45ULL;

/// LR side after `augment` zooms a pair with this LR side.
Index zoomed_lr_side(Index lr_side, Index scale, double zoom) {
  return static_cast<Index>(std::lround(zoom * static_cast<double>(lr_side * scale))) / scale;
}

}  // namespace

std::vector<PatchPair> epoch_patches(std::span<const HsiCube> cubes, const TrainConfig& cfg, Index scale,
                                     Index epoch) {
  const Rng epoch_rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(epoch));
  std::vector<PatchPair> pairs;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    Rng rng = Rng(epoch_rng).fork(i);
    for (PatchPair& p :
         extract_patches(cubes[i], cfg.patches_per_cube, cfg.patch, scale, rng, "cube" + std::to_string(i))) {
      if (cfg.augment) {
        Augmentation a = random_augmentation(rng);
        // Keep every zoomed patch large enough for the network.
        if (zoomed_lr_side(cfg.patch, scale, a.zoom) < kMinInputSide) a.zoom = 1.0;
        p = augment(p, a, scale);
      }
      pairs.push_back(std::move(p));
    }
  }
  Rng shuffle = Rng(epoch_rng).fork(kShuffleSalt);
  for (std::size_t i = pairs.size(); i > 1; --i) {
    std::swap(pairs[i - 1], pairs[static_cast<std::size_t>(shuffle.below(static_cast<Index>(i)))]);
  }
  return pairs;
}

MetricReport validate_model(std::span<const HsiCube> cubes, const ModelConfig& model, const ModelParameters& params) {
  MetricReport mean;
  Index scored = 0, finite_psnr = 0;
  for (const HsiCube& cube : cubes) {
    const Index h = cube.height / model.scale * model.scale, w = cube.width / model.scale * model.scale;
    if (h / model.scale < kMinInputSide || w / model.scale < kMinInputSide || h < 11 || w < 11) continue;
    const HsiCube hr = crop(cube, 0, 0, h, w);
    const MetricReport r = evaluate(hr, super_resolve(degrade(hr, model.scale), model, params));
    if (std::isfinite(r.psnr_db)) {
      mean.psnr_db += r.psnr_db;
      ++finite_psnr;
    }
    mean.ssim += r.ssim;
    mean.cc += r.cc;
    mean.sam_degrees += r.sam_degrees;
    ++scored;
  }
  if (scored == 0) throw ShapeError("no validation cube is large enough to score");
  const double n = static_cast<double>(scored);
  mean.psnr_db = finite_psnr == 0 ? std::numeric_limits<double>::infinity()
                                  : mean.psnr_db / static_cast<double>(finite_psnr);
  mean.ssim /= n;
  mean.cc /= n;
  mean.sam_degrees /= n;
  return mean;
}

// Loop ------------------------------------------------------------------------

namespace {

std::vector<HsiCube> load_cubes(const std::vector<std::filesystem::path>& paths) {
  std::vector<HsiCube> cubes;
  for (const auto& p : paths) cubes.push_back(normalize(read_hsic(p)));
  return cubes;
}

std::string format_val(const ValRecord& v) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%lld %.17g %.17g %.17g %.17g", static_cast<long long>(v.epoch), v.report.psnr_db,
                v.report.ssim, v.report.cc, v.report.sam_degrees);
  return buf;
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const ModelConfig& model, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, const std::optional<Checkpoint>& resume) {
  model.validate();
  cfg.validate();
  const std::vector<HsiCube> train_cubes = load_cubes(manifest.paths(Split::train));
  if (train_cubes.empty()) throw ConfigError("manifest has no training cubes");
  const std::vector<HsiCube> val_cubes = load_cubes(manifest.paths(Split::val));
  for (const HsiCube& c : train_cubes) {
    if (c.bands != model.bands) {
      throw ConfigError("training cube has " + std::to_string(c.bands) + " bands, model expects " +
                        std::to_string(model.bands));
    }
  }

  Index first_epoch = 1;
  std::optional<Trainer> trainer;
  if (resume) {
    trainer.emplace(Trainer::resume(*resume, cfg));
    if (!(trainer->model_config() == model)) throw ConfigError("checkpoint model config differs from the requested one");
    first_epoch = Trainer::epochs_done(*resume) + 1;
  } else {
    Rng rng = Rng(cfg.seed).fork(0x494e4954ULL);
    trainer.emplace(model, init_parameters(model, rng), cfg);
  }

  std::filesystem::create_directories(out_dir);
  const auto mode = resume ? std::ios::app : std::ios::trunc;
  std::ofstream log(out_dir / "train.log", std::ios::out | mode);
  std::ofstream val_log(out_dir / "val.log", std::ios::out | mode);
  if (!log || !val_log) throw std::runtime_error("cannot write logs in " + out_dir.string());

  TrainResult result;
  for (Index epoch = first_epoch; epoch <= cfg.epochs; ++epoch) {
    const std::vector<PatchPair> pairs = epoch_patches(train_cubes, cfg, model.scale, epoch);
    const std::span<const PatchPair> all(pairs);
    for (std::size_t at = 0; at < pairs.size(); at += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t n = std::min(static_cast<std::size_t>(cfg.batch), pairs.size() - at);
      const TrainRecord r = trainer->step(all.subspan(at, n), epoch);
      log << format_record(r) << '\n' << std::flush;
      result.records.push_back(r);
    }
    if (!val_cubes.empty()) {
      ValRecord v{epoch, validate_model(val_cubes, model, trainer->params())};
      val_log << format_val(v) << '\n' << std::flush;
      result.validation.push_back(std::move(v));
    }
    if (cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0) {
      write_checkpoint(trainer->checkpoint(epoch), out_dir / ("epoch-" + std::to_string(epoch) + ".srdn"));
    }
  }
  result.final_checkpoint = out_dir / "final.srdn";
  write_checkpoint(trainer->checkpoint(std::max(cfg.epochs, first_epoch - 1)), result.final_checkpoint);
  return result;
}

}  // namespace srdnet
