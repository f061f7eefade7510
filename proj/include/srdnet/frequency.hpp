#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "srdnet/tensor.hpp"

namespace srdnet {

using Complex = std::complex<double>;
/// H×W grid of DFT coefficients F(u, v), u along rows.
using ComplexGrid = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BandRef = Eigen::Ref<const RowMatrix>;

/// In-place unnormalised 1D DFT, X[k] = Σ x[n] e^{-2πi kn/N}; the inverse
/// flag flips the sign of the exponent. Radix-2 for power-of-two lengths,
/// direct summation otherwise.
void dft_inplace(std::span<Complex> x, bool inverse = false);

/// F(u,v) = Σ_x Σ_y f(x,y) e^{-2πi(ux/H + vy/W)}, computed row-column.
ComplexGrid dft2(const BandRef& band);
ComplexGrid dft2(const ComplexGrid& grid, bool inverse = false);

struct FrequencyDistance {
  RowMatrix grid;  // |F_gt - F_sr|²
  double mean;     // grid.sum() / (H·W)
};

FrequencyDistance freq_distance_band(const BandRef& gt, const BandRef& sr);

/// |F_gt - F_sr|^α divided by its maximum. All zeros when the spectra agree.
RowMatrix weight_matrix(const BandRef& gt, const BandRef& sr, double alpha);

struct FreqLossConfig {
  double alpha = 1.0;
  double beta = 0.1;
};

/// Σ_k (1/HW) Σ_{u,v} w^k(u,v) |F^k_gt - F^k_sr|² over [B, H, W] cubes. The
/// weights are recomputed from the current inputs and carry no gradient.
Tensor hfl(const Tensor& gt, const Tensor& sr, const FreqLossConfig& cfg = {});

/// Per-band weight grids for `hfl` at the current inputs.
std::vector<RowMatrix> hfl_weights(const Tensor& gt, const Tensor& sr, double alpha);
/// The same loss with caller-supplied weights held fixed.
Tensor weighted_freq_loss(const Tensor& gt, const Tensor& sr, std::span<const RowMatrix> weights);

struct LossTerms {
  Tensor total;  // l1 + β·hfl
  Tensor l1;     // mean absolute error over voxels
  Tensor hfl;
};

LossTerms total_loss(const Tensor& gt, const Tensor& sr, const FreqLossConfig& cfg = {});

/// Moves the DC term to (H/2, W/2).
ComplexGrid fftshift(const ComplexGrid& grid);

/// 10·log10(|F_shifted|² + 1e-12), in dB.
RowMatrix spectrum_power(const BandRef& band);

}  // namespace srdnet
