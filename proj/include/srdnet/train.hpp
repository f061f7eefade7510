#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "srdnet/data.hpp"
#include "srdnet/frequency.hpp"
#include "srdnet/metrics.hpp"
#include "srdnet/model.hpp"

namespace srdnet {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 1e-4;
  Index epochs = 50;
  Index batch = 4;              // samples per optimizer step, gradients averaged
  FreqLossConfig loss;          // alpha, beta
  std::uint64_t seed = 0;
  Index patch = 32;             // LR patch side
  Index patches_per_cube = 24;
  bool augment = true;
  Index checkpoint_interval = 0;  // epochs between checkpoints; 0 saves only the final one

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);

struct TrainRecord {
  Index step = 0;
  Index epoch = 0;
  double l1 = 0;
  double hfl = 0;
  double total = 0;
  double wall_seconds = 0;  // not written to the log, which must stay reproducible
};

/// `step epoch l1 hfl total` with round-trip precision.
std::string format_record(const TrainRecord& r);
TrainRecord parse_record(const std::string& line);

// Adam ------------------------------------------------------------------------

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  std::vector<Vector> m;
  std::vector<Vector> v;
  std::int64_t step = 0;

  static AdamState zeros_like(std::span<const Tensor> params);
};

/// Bias-corrected Adam. Each parameter is replaced by a fresh leaf that
/// requires a gradient.
void adam_step(std::span<Tensor> params, std::span<const Vector> grads, AdamState& state, double lr);

// Training --------------------------------------------------------------------

/// Model, optimizer and step counter. `step` runs one optimizer update over a
/// batch with sequential forward/backward passes.
class Trainer {
 public:
  Trainer(ModelConfig model, ModelParameters params, TrainConfig cfg);

  TrainRecord step(std::span<const PatchPair> batch, Index epoch);

  const ModelConfig& model_config() const { return model_; }
  const ModelParameters& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const AdamState& adam() const { return adam_; }
  std::int64_t steps_done() const { return adam_.step; }

  /// Model checkpoint plus "adam.m.*" / "adam.v.*" tensors and the step and
  /// epoch counters under meta["train"].
  Checkpoint checkpoint(Index epochs_done) const;
  /// Restores parameters and optimizer state. `cfg` replaces the stored one.
  static Trainer resume(const Checkpoint& ckpt, const TrainConfig& cfg);
  /// Epochs completed when the checkpoint was written.
  static Index epochs_done(const Checkpoint& ckpt);

 private:
  ModelConfig model_;
  ModelParameters params_;
  TrainConfig cfg_;
  AdamState adam_;
};

/// Patch pairs for one epoch: `patches_per_cube` crops of every cube, each
/// augmented, then shuffled. Depends only on (seed, epoch).
std::vector<PatchPair> epoch_patches(std::span<const HsiCube> cubes, const TrainConfig& cfg, Index scale,
                                     Index epoch);

struct ValRecord {
  Index epoch = 0;
  MetricReport report;  // averaged over the val cubes
};

/// Degrades each cube, super-resolves it and scores the result.
MetricReport validate_model(std::span<const HsiCube> cubes, const ModelConfig& model, const ModelParameters& params);

struct TrainResult {
  std::vector<TrainRecord> records;
  std::vector<ValRecord> validation;
  std::filesystem::path final_checkpoint;
};

/// Writes `train.log`, `val.log`, periodic `epoch-<n>.srdn` checkpoints and
/// `final.srdn` into `out_dir`. With `resume`, continues after the epochs
/// recorded in that checkpoint and appends to the logs.
TrainResult train(const DatasetManifest& manifest, const ModelConfig& model, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, const std::optional<Checkpoint>& resume = std::nullopt);

}  // namespace srdnet
