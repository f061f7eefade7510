#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "srdnet/tensor.hpp"

namespace srdnet {

struct GradCheckOptions {
  Index probes = 20;
  double step = 1e-5;        // central-difference half width
  double tolerance = 1e-4;   // on |analytic - numeric| / max(|analytic|, |numeric|, floor)
  double floor = 1e-6;
};

struct GradCheckResult {
  std::string name;
  Index probes = 0;
  Index flat = 0;   // probes where both gradients are below the floor
  Index kinks = 0;  // probes redrawn because the loss is not smooth there
  double max_error = 0;
  bool passed = false;
};

/// Maps the current inputs to a 0-d loss.
using LossFn = std::function<Tensor(std::span<const Tensor>)>;
/// Maps the current inputs to a tensor of any shape.
using OutputFn = std::function<Tensor(std::span<const Tensor>)>;

/// Compares the reverse-mode gradient with central differences at randomly
/// chosen input elements. A probe whose one-sided differences disagree sits
/// on a kink (ReLU at 0, a max-pool tie) and is redrawn.
GradCheckResult check_gradient(const std::string& name, const LossFn& loss, std::vector<Tensor> inputs, Rng& rng,
                               const GradCheckOptions& opts = {});

/// Same, with the loss Σ P ⊙ f(inputs) for a fixed random P in [-1, 1].
GradCheckResult check_output_gradient(const std::string& name, const OutputFn& f, std::vector<Tensor> inputs,
                                      Rng& rng, const GradCheckOptions& opts = {});

/// module: all | ops | blocks | model | freq.
std::vector<GradCheckResult> run_gradcheck_suite(const std::string& module, std::uint64_t seed,
                                                 const GradCheckOptions& opts = {});

std::string format_result(const GradCheckResult& r);

}  // namespace srdnet
