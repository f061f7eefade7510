#include "srdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace srdnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double band_mse(const HsiCube& gt, const HsiCube& sr, Index k) {
  return (gt.band(k) - sr.band(k)).squaredNorm() / static_cast<double>(gt.height * gt.width);
}

double mean_of(const std::vector<double>& v) {
  double total = 0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

}  // namespace

// PSNR ------------------------------------------------------------------------

std::vector<double> psnr_per_band(const HsiCube& gt, const HsiCube& sr, double peak) {
  require_same_shape(gt, sr, "psnr");
  if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be positive");
  std::vector<double> out;
  for (Index k = 0; k < gt.bands; ++k) {
    const double mse = band_mse(gt, sr, k);
    out.push_back(mse == 0 ? kInf : 10.0 * std::log10(peak * peak / mse));
  }
  return out;
}

double psnr(const HsiCube& gt, const HsiCube& sr, double peak, PsnrMode mode) {
  require_same_shape(gt, sr, "psnr");
  if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be positive");
  if (mode == PsnrMode::global_mse) {
    const double mse = (gt.voxels - sr.voxels).squaredNorm() / static_cast<double>(gt.voxels.size());
    return mse == 0 ? kInf : 10.0 * std::log10(peak * peak / mse);
  }
  double total = 0;
  Index finite = 0;
  for (double v : psnr_per_band(gt, sr, peak)) {
    if (std::isfinite(v)) {
      total += v;
      ++finite;
    }
  }
  return finite == 0 ? kInf : total / static_cast<double>(finite);
}

// SSIM ------------------------------------------------------------------------

namespace {

constexpr Index kWindow = 11;
constexpr double kSigma = 1.5;

Vector gaussian_window() {
  Vector g(kWindow);
  for (Index i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i - kWindow / 2);
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  return g / g.sum();
}

/// Valid-region separable Gaussian filter.
RowMatrix filter_valid(const RowMatrix& x, const Vector& g) {
  const Index oh = x.rows() - kWindow + 1, ow = x.cols() - kWindow + 1;
  RowMatrix rows(x.rows(), ow);
  for (Index c = 0; c < ow; ++c) rows.col(c) = x.middleCols(c, kWindow) * g;
  RowMatrix out(oh, ow);
  for (Index r = 0; r < oh; ++r) out.row(r) = g.transpose() * rows.middleRows(r, kWindow);
  return out;
}

double ssim_band(const RowMatrix& x, const RowMatrix& y, double peak) {
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  static const Vector g = gaussian_window();
  const RowMatrix mx = filter_valid(x, g), my = filter_valid(y, g);
  const RowMatrix sxx = filter_valid(x.cwiseProduct(x), g) - mx.cwiseProduct(mx);
  const RowMatrix syy = filter_valid(y.cwiseProduct(y), g) - my.cwiseProduct(my);
  const RowMatrix sxy = filter_valid(x.cwiseProduct(y), g) - mx.cwiseProduct(my);
  const auto num = (2.0 * mx.cwiseProduct(my).array() + c1) * (2.0 * sxy.array() + c2);
  const auto den = (mx.cwiseAbs2().array() + my.cwiseAbs2().array() + c1) * (sxx.array() + syy.array() + c2);
  return (num / den).mean();
}

}  // namespace

std::vector<double> ssim_per_band(const HsiCube& gt, const HsiCube& sr, double peak) {
  require_same_shape(gt, sr, "ssim");
  if (gt.height < kWindow || gt.width < kWindow) {
    throw ShapeError("ssim needs H, W >= 11, got " + to_string(gt.shape()));
  }
  std::vector<double> out;
  for (Index k = 0; k < gt.bands; ++k) out.push_back(ssim_band(gt.band(k), sr.band(k), peak));
  return out;
}

double ssim(const HsiCube& gt, const HsiCube& sr, double peak) { return mean_of(ssim_per_band(gt, sr, peak)); }

// CC --------------------------------------------------------------------------

CcResult cc_detail(const HsiCube& gt, const HsiCube& sr) {
  require_same_shape(gt, sr, "cc");
  CcResult r;
  double total = 0;
  Index used = 0;
  for (Index k = 0; k < gt.bands; ++k) {
    const Eigen::ArrayXXd a = gt.band(k).array() - gt.band(k).mean();
    const Eigen::ArrayXXd b = sr.band(k).array() - sr.band(k).mean();
    const double va = a.square().sum(), vb = b.square().sum();
    if (va == 0 || vb == 0) {
      r.per_band.push_back(std::numeric_limits<double>::quiet_NaN());
      ++r.skipped;
      continue;
    }
    const double c = (a * b).sum() / std::sqrt(va * vb);
    r.per_band.push_back(c);
    total += c;
    ++used;
  }
  if (used == 0) throw UndefinedMetric("cc: every band has zero variance");
  r.value = total / static_cast<double>(used);
  return r;
}

double cc(const HsiCube& gt, const HsiCube& sr) { return cc_detail(gt, sr).value; }

// SAM -------------------------------------------------------------------------

SamResult sam_detail(const HsiCube& gt, const HsiCube& sr) {
  require_same_shape(gt, sr, "sam");
  const Index plane = gt.height * gt.width;
  // Columns are pixels, rows are bands.
  const ConstMatrixMap g(gt.voxels.data(), gt.bands, plane);
  const ConstMatrixMap s(sr.voxels.data(), sr.bands, plane);
  SamResult r;
  double total = 0;
  Index used = 0;
  for (Index p = 0; p < plane; ++p) {
    const double ng = g.col(p).norm(), ns = s.col(p).norm();
    if (ng == 0 || ns == 0) {
      ++r.skipped;
      continue;
    }
    // Stable near 0 and 180 degrees, unlike acos of the cosine.
    const Vector a = g.col(p) / ng, b = s.col(p) / ns;
    total += 2.0 * std::atan2((a - b).norm(), (a + b).norm());
    ++used;
  }
  if (used == 0) throw UndefinedMetric("sam: every pixel has a zero spectrum");
  r.degrees = total / static_cast<double>(used) * 180.0 / std::numbers::pi;
  return r;
}

double sam(const HsiCube& gt, const HsiCube& sr) { return sam_detail(gt, sr).degrees; }

// Report ----------------------------------------------------------------------

std::string MetricReport::summary() const {
  std::ostringstream os;
  os.precision(10);
  os << "psnr=";
  if (identical()) {
    os << "identical";
  } else {
    os << psnr_db;
  }
  os << " ssim=" << ssim << " cc=" << cc << " sam=" << sam_degrees;
  return os.str();
}

MetricReport evaluate(const HsiCube& gt, const HsiCube& sr, double peak, PsnrMode mode) {
  MetricReport r;
  r.psnr_mode = mode;
  r.psnr_db = psnr(gt, sr, peak, mode);
  r.psnr_per_band = psnr_per_band(gt, sr, peak);
  r.ssim_per_band = ssim_per_band(gt, sr, peak);
  r.ssim = mean_of(r.ssim_per_band);
  const CcResult c = cc_detail(gt, sr);
  r.cc = c.value;
  r.cc_per_band = c.per_band;
  r.sam_degrees = sam(gt, sr);
  return r;
}

}  // namespace srdnet
