#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "srdnet/autodiff.hpp"
#include "srdnet/train.hpp"

using namespace srdnet;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_model(Index bands) {
  ModelConfig cfg = ModelConfig::make(bands, 2);
  cfg.c_feat = 4;
  cfg.c_3d = 2;
  cfg.n_units = 1;
  cfg.igm_width = 2;
  return cfg;
}

TrainConfig toy_train() {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.epochs = 2;
  cfg.batch = 2;
  cfg.patch = 8;
  cfg.patches_per_cube = 2;
  cfg.seed = 4;
  return cfg;
}

std::vector<PatchPair> toy_batch(Index bands, std::uint64_t seed) {
  Rng rng(seed);
  return extract_patches(synth_cube(SynthKind::mixture, bands, 24, 24, seed), 2, 8, 2, rng);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// Ten small cubes with a manifest, written once per directory.
fs::path make_dataset(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("srdnet_test_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir / "data");
  std::vector<fs::path> paths;
  for (int i = 0; i < 10; ++i) {
    const fs::path p = "cube-" + std::to_string(i) + ".hsic";
    write_hsic(synth_cube(SynthKind::mixture, 3, 20, 20, static_cast<std::uint64_t>(i)), dir / "data" / p);
    paths.push_back(p);
  }
  write_manifest(make_manifest(paths, 1), dir / "data" / "manifest.tsv");
  return dir;
}

}  // namespace

TEST(Record, FormatRoundTrip) {
  const TrainRecord r{12, 3, 0.1 + 0.2, 1.0 / 3.0, std::nextafter(1.0, 2.0), 5.0};
  const std::string line = format_record(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const TrainRecord back = parse_record(line);
  EXPECT_EQ(back.step, 12);
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.l1, r.l1);
  EXPECT_EQ(back.hfl, r.hfl);
  EXPECT_EQ(back.total, r.total);
  EXPECT_THROW(parse_record("1 2 x"), DecodeError);
}

TEST(Config, TrainValidation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  for (auto bad : {&TrainConfig::batch, &TrainConfig::epochs, &TrainConfig::patch}) {
    TrainConfig cfg;
    cfg.*bad = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
  }
  TrainConfig cfg;
  cfg.lr = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.loss.beta = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<Tensor> p{constant({3}, 0.5, true)};
  AdamState s = AdamState::zeros_like(p);
  const std::vector<Vector> g{Vector::Zero(3)};
  adam_step(p, g, s, 0.1);
  EXPECT_EQ(p[0].values(), Vector::Constant(3, 0.5));
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Bias correction makes the first step exactly lr·g/(|g| + ε).
  std::vector<Tensor> p{constant({2}, 1.0, true)};
  AdamState s = AdamState::zeros_like(p);
  const std::vector<Vector> g{(Vector(2) << 1.0, -4.0).finished()};
  adam_step(p, g, s, 1e-3);
  EXPECT_NEAR(p[0].values()[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(p[0].values()[1], 1.0 + 1e-3, 1e-10);
  EXPECT_TRUE(p[0].requires_grad());
}

TEST(Adam, MinimisesQuadratic) {
  std::vector<Tensor> p{constant({1}, 1.0, true)};
  AdamState s = AdamState::zeros_like(p);
  for (int i = 0; i < 2000; ++i) {
    const Gradients g = backward(sum(square(p[0])));
    const std::vector<Vector> grads{g.of(p[0])};
    adam_step(p, grads, s, 1e-2);
  }
  EXPECT_LT(std::abs(p[0].values()[0]), 1e-3);
}

TEST(Adam, MismatchedGradientsRejected) {
  std::vector<Tensor> p{constant({2}, 1.0, true)};
  AdamState s = AdamState::zeros_like(p);
  const std::vector<Vector> g{Vector::Zero(3)};
  EXPECT_THROW(adam_step(p, g, s, 1e-3), ShapeError);
}

TEST(Trainer, LoggedTotalCombinesTerms) {
  for (double beta : {0.0, 0.25}) {
    const ModelConfig model = toy_model(3);
    Rng rng(1);
    TrainConfig cfg = toy_train();
    cfg.loss.beta = beta;
    Trainer t(model, init_parameters(model, rng), cfg);
    const TrainRecord r = t.step(toy_batch(3, 2), 0);
    EXPECT_EQ(r.step, 1);
    EXPECT_GT(r.l1, 0);
    EXPECT_GT(r.hfl, 0);
    EXPECT_NEAR(r.total, r.l1 + beta * r.hfl, 1e-15);
    if (beta == 0) EXPECT_EQ(r.total, r.l1);
  }
}

TEST(Trainer, StepsReduceLossOnFixedBatch) {
  const ModelConfig model = toy_model(3);
  Rng rng(2);
  Trainer t(model, init_parameters(model, rng), toy_train());
  const auto batch = toy_batch(3, 3);
  const double first = t.step(batch, 0).total;
  double last = first;
  for (int i = 0; i < 20; ++i) last = t.step(batch, 0).total;
  EXPECT_LT(last, first);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const ModelConfig model = toy_model(3);
  Rng rng(3);
  const ModelParameters init = init_parameters(model, rng);
  const auto b1 = toy_batch(3, 4), b2 = toy_batch(3, 5);

  Trainer straight(model, init, toy_train());
  straight.step(b1, 0);
  straight.step(b2, 1);

  Trainer first(model, init, toy_train());
  first.step(b1, 0);
  const Checkpoint ck = decode_checkpoint(encode_checkpoint(first.checkpoint(1)));
  EXPECT_EQ(Trainer::epochs_done(ck), 1);
  Trainer resumed = Trainer::resume(ck, toy_train());
  EXPECT_EQ(resumed.steps_done(), 1);
  resumed.step(b2, 1);

  const auto a = straight.params().tensors(), b = resumed.params().tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].values(), b[i].values());
}

TEST(Trainer, NonFiniteLossNamesTheCulprit) {
  const ModelConfig model = toy_model(3);
  Rng rng(4);
  ModelParameters p = init_parameters(model, rng);
  auto ts = p.tensors();
  Vector poisoned = ts[0].values();
  poisoned[0] = std::numeric_limits<double>::quiet_NaN();
  ts[0] = Tensor(ts[0].shape(), poisoned, true);
  p.assign(ts);
  Trainer t(model, p, toy_train());
  try {
    t.step(toy_batch(3, 6), 0);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos) << e.what();
  }
}

TEST(EpochPatches, DependOnlyOnSeedAndEpoch) {
  std::vector<HsiCube> cubes;
  for (int i = 0; i < 3; ++i) cubes.push_back(synth_cube(SynthKind::mixture, 3, 24, 24, static_cast<std::uint64_t>(i)));
  const TrainConfig cfg = toy_train();
  const auto a = epoch_patches(cubes, cfg, 2, 0), b = epoch_patches(cubes, cfg, 2, 0), c = epoch_patches(cubes, cfg, 2, 1);
  ASSERT_EQ(a.size(), 6u);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].hr.voxels, b[i].hr.voxels);
    EXPECT_EQ(a[i].augmentation, b[i].augmentation);
    EXPECT_EQ(a[i].lr.height * 2, a[i].hr.height);
    EXPECT_GE(a[i].lr.height, kMinInputSide);
    differs |= a[i].hr.voxels.size() != c[i].hr.voxels.size() || a[i].hr.voxels != c[i].hr.voxels;
  }
  EXPECT_TRUE(differs);
}

TEST(Train, DeterministicAndResumable) {
  const fs::path dir = make_dataset("determinism");
  const DatasetManifest m = read_manifest(dir / "data" / "manifest.tsv");
  const ModelConfig model = toy_model(3);
  TrainConfig cfg = toy_train();
  cfg.checkpoint_interval = 1;

  const TrainResult a = train(m, model, cfg, dir / "a");
  train(m, model, cfg, dir / "b");
  EXPECT_EQ(a.records.size(), 16u);  // 8 train cubes × 2 patches / batch 2, two epochs
  EXPECT_EQ(a.validation.size(), 2u);
  for (const char* f : {"train.log", "val.log", "epoch-1.srdn", "final.srdn"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }

  TrainConfig half = cfg;
  half.epochs = 1;
  train(m, model, half, dir / "c");
  train(m, model, cfg, dir / "c", read_checkpoint(dir / "c" / "final.srdn"));
  EXPECT_EQ(slurp(dir / "c" / "train.log"), slurp(dir / "a" / "train.log"));
  EXPECT_EQ(slurp(dir / "c" / "final.srdn"), slurp(dir / "a" / "final.srdn"));
  fs::remove_all(dir);
}

TEST(Train, BandMismatchRejected) {
  const fs::path dir = make_dataset("bands");
  EXPECT_THROW(train(read_manifest(dir / "data" / "manifest.tsv"), toy_model(5), toy_train(), dir / "out"),
               ConfigError);
  fs::remove_all(dir);
}
