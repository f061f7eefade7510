#include <gtest/gtest.h>

#include <cmath>

#include "srdnet/metrics.hpp"

using namespace srdnet;

namespace {

HsiCube random_cube(Index b, Index h, Index w, Rng& rng) {
  return HsiCube(b, h, w, uniform({b, h, w}, rng, 0, 1).values());
}

HsiCube filled(Index b, Index h, Index w, double v) { return HsiCube(b, h, w, Vector::Constant(b * h * w, v)); }

// Per-window SSIM with an explicit 2D Gaussian, averaged over every valid
// window position.
double ssim_oracle(const HsiCube& x, const HsiCube& y, double peak) {
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  double kernel[11][11], norm = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) norm += kernel[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  double total = 0;
  for (Index k = 0; k < x.bands; ++k) {
    double band_total = 0;
    Index windows = 0;
    for (Index r = 0; r + 11 <= x.height; ++r)
      for (Index c = 0; c + 11 <= x.width; ++c) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double wgt = kernel[i][j] / norm, a = x(k, r + i, c + j), b = y(k, r + i, c + j);
            mx += wgt * a;
            my += wgt * b;
            sxx += wgt * a * a;
            syy += wgt * b * b;
            sxy += wgt * a * b;
          }
        sxx -= mx * mx;
        syy -= my * my;
        sxy -= mx * my;
        band_total += (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        ++windows;
      }
    total += band_total / double(windows);
  }
  return total / double(x.bands);
}

}  // namespace

TEST(Psnr, KnownValues) {
  const HsiCube gt = filled(2, 4, 4, 0.0), sr = filled(2, 4, 4, 0.1);
  EXPECT_NEAR(psnr(gt, sr), 20.0, 1e-12);
  EXPECT_NEAR(psnr(gt, sr, 1.0, PsnrMode::global_mse), 20.0, 1e-12);
  EXPECT_NEAR(psnr(gt, sr, 10.0), 40.0, 1e-12);
  EXPECT_EQ(psnr(gt, gt), std::numeric_limits<double>::infinity());
}

TEST(Psnr, BandMeanVersusGlobal) {
  HsiCube gt = filled(2, 2, 2, 0.0), sr = gt;
  for (Index y = 0; y < 2; ++y)
    for (Index x = 0; x < 2; ++x) {
      sr(0, y, x) = 0.1;   // 20 dB
      sr(1, y, x) = 0.01;  // 40 dB
    }
  EXPECT_NEAR(psnr(gt, sr), 30.0, 1e-12);
  EXPECT_NEAR(psnr(gt, sr, 1.0, PsnrMode::global_mse), 10 * std::log10(2 / (0.01 + 0.0001)), 1e-12);
  const auto per = psnr_per_band(gt, sr);
  EXPECT_NEAR(per[0], 20.0, 1e-12);
  EXPECT_NEAR(per[1], 40.0, 1e-12);
}

TEST(Psnr, ExactBandsLeftOutOfMean) {
  HsiCube gt = filled(2, 2, 2, 0.0), sr = gt;
  for (Index y = 0; y < 2; ++y)
    for (Index x = 0; x < 2; ++x) sr(1, y, x) = 0.1;
  EXPECT_NEAR(psnr(gt, sr), 20.0, 1e-12);
}

TEST(Psnr, RejectsBadArguments) {
  EXPECT_THROW(psnr(filled(1, 2, 2, 0), filled(1, 2, 3, 0)), ShapeError);
  EXPECT_THROW(psnr(filled(1, 2, 2, 0), filled(1, 2, 2, 0), 0.0), std::invalid_argument);
}

TEST(Ssim, IdentityIsOne) {
  Rng rng(1);
  const HsiCube x = random_cube(3, 16, 12, rng);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
}

TEST(Ssim, MatchesWindowOracle) {
  Rng rng(2);
  const HsiCube x = random_cube(2, 14, 17, rng), y = random_cube(2, 14, 17, rng);
  EXPECT_NEAR(ssim(x, y), ssim_oracle(x, y, 1.0), 1e-12);
  EXPECT_NEAR(ssim(x, y, 2.0), ssim_oracle(x, y, 2.0), 1e-12);
  EXPECT_LT(ssim(x, y), 0.5);
}

TEST(Ssim, SmallCubesRejected) {
  EXPECT_THROW(ssim(filled(1, 10, 20, 0), filled(1, 10, 20, 0)), ShapeError);
}

TEST(Cc, AffineInvariantAndSigned) {
  Rng rng(3);
  const HsiCube x = random_cube(3, 5, 5, rng);
  HsiCube affine = x, negated = x;
  affine.voxels = 3.0 * x.voxels.array() + 2.0;
  negated.voxels = -x.voxels;
  EXPECT_NEAR(cc(x, affine), 1.0, 1e-12);
  EXPECT_NEAR(cc(x, negated), -1.0, 1e-12);
}

TEST(Cc, ConstantBandsSkipped) {
  Rng rng(4);
  HsiCube gt = random_cube(2, 4, 4, rng);
  HsiCube sr = gt;
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) sr(0, y, x) = 0.5;
  const CcResult r = cc_detail(gt, sr);
  EXPECT_EQ(r.skipped, 1);
  EXPECT_TRUE(std::isnan(r.per_band[0]));
  EXPECT_NEAR(r.value, 1.0, 1e-12);
  EXPECT_THROW(cc(filled(2, 3, 3, 1), filled(2, 3, 3, 1)), UndefinedMetric);
}

TEST(Sam, KnownAngles) {
  HsiCube a(2, 1, 2), b(2, 1, 2);
  a(0, 0, 0) = 1, a(1, 0, 0) = 0;  // pixel 0: orthogonal
  b(0, 0, 0) = 0, b(1, 0, 0) = 1;
  a(0, 0, 1) = 1, a(1, 0, 1) = 1;  // pixel 1: parallel, scaled
  b(0, 0, 1) = 4, b(1, 0, 1) = 4;
  EXPECT_NEAR(sam(a, b), 45.0, 1e-12);
  EXPECT_NEAR(sam(a, a), 0.0, 1e-6);
}

TEST(Sam, ZeroSpectraSkipped) {
  HsiCube a(2, 1, 2), b(2, 1, 2);
  a(0, 0, 0) = 1, b(1, 0, 0) = 1;
  const SamResult r = sam_detail(a, b);
  EXPECT_EQ(r.skipped, 1);
  EXPECT_NEAR(r.degrees, 90.0, 1e-12);
  EXPECT_THROW(sam(filled(3, 2, 2, 0), filled(3, 2, 2, 1)), UndefinedMetric);
}

TEST(Report, SummaryFormat) {
  Rng rng(5);
  const HsiCube x = random_cube(2, 12, 12, rng);
  EXPECT_EQ(evaluate(x, x).summary(), "psnr=identical ssim=1 cc=1 sam=0");
  HsiCube y = x;
  y.voxels.array() += 0.1;
  const MetricReport r = evaluate(x, y);
  EXPECT_FALSE(r.identical());
  EXPECT_NEAR(r.psnr_db, 20.0, 1e-9);
  EXPECT_EQ(r.psnr_per_band.size(), 2u);
  EXPECT_EQ(r.summary().rfind("psnr=20 ", 0), 0u) << r.summary();
}
