#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "srdnet/data.hpp"

namespace srdnet {

class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class PsnrMode {
  band_mean,   // mean over bands of 10·log10(peak²/MSE_k); the default
  global_mse,  // 10·log10(peak²/MSE) over all voxels
};

/// +inf when the cubes are identical. In band_mean mode, bands with zero
/// error are left out of the mean unless every band is exact.
double psnr(const HsiCube& gt, const HsiCube& sr, double peak = 1.0, PsnrMode mode = PsnrMode::band_mean);
std::vector<double> psnr_per_band(const HsiCube& gt, const HsiCube& sr, double peak = 1.0);

/// Mean local SSIM per band (11×11 Gaussian window, σ = 1.5, valid region),
/// averaged over bands. Requires H, W >= 11.
double ssim(const HsiCube& gt, const HsiCube& sr, double peak = 1.0);
std::vector<double> ssim_per_band(const HsiCube& gt, const HsiCube& sr, double peak = 1.0);

struct CcResult {
  double value = 0;
  std::vector<double> per_band;  // NaN for skipped bands
  Index skipped = 0;
};

/// Mean per-band Pearson correlation. Bands with zero variance in either cube
/// are skipped; throws UndefinedMetric when every band is skipped.
CcResult cc_detail(const HsiCube& gt, const HsiCube& sr);
double cc(const HsiCube& gt, const HsiCube& sr);

struct SamResult {
  double degrees = 0;
  Index skipped = 0;  // pixels with a zero spectrum in either cube
};

/// Mean spectral angle in degrees over pixels with non-zero spectra in both
/// cubes; throws UndefinedMetric when no such pixel exists.
SamResult sam_detail(const HsiCube& gt, const HsiCube& sr);
double sam(const HsiCube& gt, const HsiCube& sr);

struct MetricReport {
  double psnr_db = 0;
  double ssim = 0;
  double cc = 0;
  double sam_degrees = 0;
  PsnrMode psnr_mode = PsnrMode::band_mean;
  std::vector<double> psnr_per_band;
  std::vector<double> ssim_per_band;
  std::vector<double> cc_per_band;

  bool identical() const { return psnr_db == std::numeric_limits<double>::infinity(); }
  /// `psnr=… ssim=… cc=… sam=…`, with psnr=identical for exact matches.
  std::string summary() const;
};

MetricReport evaluate(const HsiCube& gt, const HsiCube& sr, double peak = 1.0,
                      PsnrMode mode = PsnrMode::band_mean);

}  // namespace srdnet
