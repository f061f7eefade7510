// Command-line front end: dataset synthesis, training, inference, scoring
// and gradient checks.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "srdnet/data.hpp"
#include "srdnet/frequency.hpp"
#include "srdnet/gradcheck.hpp"
#include "srdnet/metrics.hpp"
#include "srdnet/model.hpp"
#include "srdnet/train.hpp"

namespace fs = std::filesystem;
using namespace srdnet;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct ModelFlags {
  Index scale = 4;
  Index c_feat = 64;
  Index c_3d = 16;
  Index units = 3;
  Index igm_width = 32;
  std::string ablate;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--scale", scale, "Upscaling factor (2, 3, 4 or 8)")->capture_default_str();
    cmd.add_option("--c-feat", c_feat, "2D feature channels")->capture_default_str();
    cmd.add_option("--c-3d", c_3d, "3D unit channels")->capture_default_str();
    cmd.add_option("--units", units, "Number of 3D units")->capture_default_str();
    cmd.add_option("--igm-width", igm_width, "Width of the IGM subnets")->capture_default_str();
    cmd.add_option("--ablate", ablate, "Components to remove: pam,2d,3d,igm,hsl");
  }

  ModelConfig config(Index bands) const {
    ModelConfig cfg = ModelConfig::make(bands, scale);
    cfg.c_feat = c_feat;
    cfg.c_3d = c_3d;
    cfg.n_units = units;
    cfg.igm_width = igm_width;
    cfg.ablation = srdnet::ablate(split_list(ablate));
    cfg.validate();
    return cfg;
  }
};

// make-dataset -----------------------------------------------------------------

struct MakeDatasetArgs {
  fs::path out;
  Index count = 10;
  Index bands = 31;
  Index height = 128;
  Index width = 128;
  std::string kind = "mixture";
  std::uint64_t seed = 0;
};

int make_dataset(const MakeDatasetArgs& a) {
  const SynthKind kind = parse_synth_kind(a.kind);
  if (a.count < 1) throw std::invalid_argument("--count must be >= 1");
  fs::create_directories(a.out);
  std::vector<fs::path> paths;
  for (Index i = 0; i < a.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "cube-%03lld.hsic", static_cast<long long>(i));
    const HsiCube cube = synth_cube(kind, a.bands, a.height, a.width, a.seed + static_cast<std::uint64_t>(i));
    write_hsic(cube, a.out / name);
    paths.emplace_back(name);
  }
  write_manifest(make_manifest(paths, a.seed), a.out / "manifest.tsv");
  std::cout << "wrote " << a.count << " cubes and " << (a.out / "manifest.tsv").string() << "\n";
  return 0;
}

// train ------------------------------------------------------------------------

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  std::optional<fs::path> resume;
  bool no_augment = false;
  TrainConfig cfg;
  ModelFlags model;
};

int run_train(TrainArgs a) {
  const DatasetManifest manifest = read_manifest(a.manifest);
  const auto train_paths = manifest.paths(Split::train);
  if (train_paths.empty()) throw ConfigError("manifest has no training cubes");
  const Index bands = read_hsic(train_paths.front()).bands;
  const ModelConfig model = a.model.config(bands);
  a.cfg.augment = !a.no_augment;
  std::optional<Checkpoint> resume;
  if (a.resume) resume = read_checkpoint(*a.resume);
  const TrainResult r = train(manifest, model, a.cfg, a.out, resume);
  if (!r.records.empty()) std::cout << "last step: " << format_record(r.records.back()) << "\n";
  if (!r.validation.empty()) std::cout << "val: " << r.validation.back().report.summary() << "\n";
  std::cout << "checkpoint: " << r.final_checkpoint.string() << "\n";
  return 0;
}

// super-resolve ----------------------------------------------------------------

int run_super_resolve(const fs::path& ckpt_path, const fs::path& in, const fs::path& out) {
  const auto [cfg, params] = load_model(read_checkpoint(ckpt_path));
  const HsiCube lr = read_hsic(in);
  HsiCube sr = super_resolve(lr, cfg, params);
  sr.wavelengths = lr.wavelengths;
  write_hsic(sr, out);
  std::cout << to_string(lr.shape()) << " -> " << to_string(sr.shape()) << "\n";
  return 0;
}

// evaluate ---------------------------------------------------------------------

int run_evaluate(const fs::path& gt, const fs::path& sr, double peak, const std::string& mode, bool per_band) {
  PsnrMode m;
  if (mode == "band") {
    m = PsnrMode::band_mean;
  } else if (mode == "global") {
    m = PsnrMode::global_mse;
  } else {
    throw std::invalid_argument("--psnr-mode must be band or global");
  }
  const MetricReport r = evaluate(read_hsic(gt), read_hsic(sr), peak, m);
  std::cout << r.summary() << "\n";
  if (per_band) {
    for (std::size_t k = 0; k < r.psnr_per_band.size(); ++k) {
      std::printf("band %zu psnr=%.6g ssim=%.6g cc=%.6g\n", k, r.psnr_per_band[k], r.ssim_per_band[k],
                  r.cc_per_band[k]);
    }
  }
  return 0;
}

// freq-analyze -----------------------------------------------------------------

int run_freq_analyze(const fs::path& gt_path, const fs::path& sr_path, const fs::path& out) {
  const HsiCube gt = read_hsic(gt_path), sr = read_hsic(sr_path);
  require_same_shape(gt, sr, "freq-analyze");
  HsiCube gt_power(gt.bands, gt.height, gt.width), sr_power = gt_power, distance = gt_power;
  fs::create_directories(out);
  std::ofstream summary(out / "summary.txt");
  for (Index k = 0; k < gt.bands; ++k) {
    gt_power.band(k) = spectrum_power(gt.band(k));
    sr_power.band(k) = spectrum_power(sr.band(k));
    const FrequencyDistance d = freq_distance_band(gt.band(k), sr.band(k));
    distance.band(k) = d.grid;
    char line[64];
    std::snprintf(line, sizeof line, "band %lld mean_distance %.17g", static_cast<long long>(k), d.mean);
    summary << line << "\n";
    std::cout << line << "\n";
  }
  write_hsic(gt_power, out / "gt_power.hsic");
  write_hsic(sr_power, out / "sr_power.hsic");
  write_hsic(distance, out / "distance.hsic");
  return 0;
}

// gradcheck --------------------------------------------------------------------

int run_gradcheck(const std::string& module, std::uint64_t seed) {
  bool ok = true;
  for (const GradCheckResult& r : run_gradcheck_suite(module, seed)) {
    std::cout << format_result(r) << "\n";
    ok = ok && r.passed;
  }
  std::cout << (ok ? "all gradient checks passed" : "gradient checks FAILED") << "\n";
  return ok ? 0 : 1;
}

// params -----------------------------------------------------------------------

int run_params(const ModelFlags& flags, Index bands) {
  const ModelConfig cfg = flags.config(bands);
  Rng rng(0);
  const ModelParameters p = init_parameters(cfg, rng);
  std::cout << count_parameters(p) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SRDNet hyperspectral super-resolution"};
  app.require_subcommand(1);
  app.failure_message([](const CLI::App*, const CLI::Error& e) { return std::string("srdnet: ") + e.what() + "\n"; });

  MakeDatasetArgs ds;
  auto* make = app.add_subcommand("make-dataset", "Write synthetic cubes and a manifest");
  make->add_option("--out", ds.out, "Output directory")->required();
  make->add_option("--count", ds.count, "Number of cubes")->capture_default_str();
  make->add_option("--bands", ds.bands)->capture_default_str();
  make->add_option("--height", ds.height)->capture_default_str();
  make->add_option("--width", ds.width)->capture_default_str();
  make->add_option("--kind", ds.kind, "gradient|sinusoid|checker|mixture")->capture_default_str();
  make->add_option("--seed", ds.seed)->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a manifest");
  train_cmd->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Directory for logs and checkpoints")->required();
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint written by train")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", tr.cfg.seed)->capture_default_str();
  train_cmd->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  train_cmd->add_option("--lr", tr.cfg.lr)->capture_default_str();
  train_cmd->add_option("--beta", tr.cfg.loss.beta, "Weight of the frequency loss")->capture_default_str();
  train_cmd->add_option("--alpha", tr.cfg.loss.alpha, "Exponent of the spectral weights")->capture_default_str();
  train_cmd->add_option("--batch", tr.cfg.batch)->capture_default_str();
  train_cmd->add_option("--patch", tr.cfg.patch, "LR patch side")->capture_default_str();
  train_cmd->add_option("--patches-per-cube", tr.cfg.patches_per_cube)->capture_default_str();
  train_cmd->add_option("--checkpoint-interval", tr.cfg.checkpoint_interval, "Epochs between checkpoints")
      ->capture_default_str();
  train_cmd->add_flag("--no-augment", tr.no_augment, "Disable rotation, flip and zoom");
  tr.model.add_to(*train_cmd);

  std::string ckpt, in, out;
  auto* sr_cmd = app.add_subcommand("super-resolve", "Upscale an HSIC cube with a checkpoint");
  sr_cmd->add_option("checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  sr_cmd->add_option("input", in)->required()->check(CLI::ExistingFile);
  sr_cmd->add_option("output", out)->required();

  std::string gt, sr;
  double peak = 1.0;
  std::string psnr_mode = "band";
  bool per_band = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a reconstruction against ground truth");
  eval_cmd->add_option("gt", gt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("sr", sr)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--peak", peak, "Peak signal value")->capture_default_str();
  eval_cmd->add_option("--psnr-mode", psnr_mode, "band (mean of per-band PSNR) or global")->capture_default_str();
  eval_cmd->add_flag("--per-band", per_band, "Also print per-band values");

  std::string freq_out = "freq";
  auto* freq_cmd = app.add_subcommand("freq-analyze", "Spectrum power maps and band-wise frequency distance");
  freq_cmd->add_option("gt", gt)->required()->check(CLI::ExistingFile);
  freq_cmd->add_option("sr", sr)->required()->check(CLI::ExistingFile);
  freq_cmd->add_option("--out", freq_out, "Output directory")->capture_default_str();

  std::string module = "all";
  std::uint64_t gc_seed = 1;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc_cmd->add_option("--module", module, "all|ops|blocks|model|freq")->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed)->capture_default_str();

  ModelFlags pf;
  Index pbands = 31;
  auto* params_cmd = app.add_subcommand("params", "Print the parameter count of a configuration");
  params_cmd->add_option("--bands", pbands)->capture_default_str();
  pf.add_to(*params_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*make) return make_dataset(ds);
    if (*train_cmd) return run_train(tr);
    if (*sr_cmd) return run_super_resolve(ckpt, in, out);
    if (*eval_cmd) return run_evaluate(gt, sr, peak, psnr_mode, per_band);
    if (*freq_cmd) return run_freq_analyze(gt, sr, freq_out);
    if (*gc_cmd) return run_gradcheck(module, gc_seed);
    if (*params_cmd) return run_params(pf, pbands);
  } catch (const std::exception& e) {
    std::cerr << "srdnet: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
