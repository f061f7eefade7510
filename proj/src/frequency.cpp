#include "srdnet/frequency.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "srdnet/detail/node.hpp"

namespace srdnet {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::span<Complex> x, double sign) {
  const std::size_t n = x.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles from the angle directly; repeated multiplication drifts.
      const Complex w = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                                            static_cast<double>(len));
      for (std::size_t start = 0; start < n; start += len) {
        const Complex u = x[start + k];
        const Complex v = x[start + k + half] * w;
        x[start + k] = u + v;
        x[start + k + half] = u - v;
      }
    }
  }
}

void dft_direct(std::span<Complex> x, double sign) {
  const std::size_t n = x.size();
  std::vector<Complex> twiddle(n), out(n);
  for (std::size_t m = 0; m < n; ++m) {
    twiddle[m] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n));
  }
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += x[j] * twiddle[(k * j) % n];
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), x.begin());
}

}  // namespace

void dft_inplace(std::span<Complex> x, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  if (x.size() <= 1) return;
  if (is_power_of_two(x.size())) {
    fft_radix2(x, sign);
  } else {
    dft_direct(x, sign);
  }
}

ComplexGrid dft2(const ComplexGrid& grid, bool inverse) {
  ComplexGrid f = grid;
  const Index h = f.rows(), w = f.cols();
  for (Index r = 0; r < h; ++r) dft_inplace({f.data() + r * w, static_cast<std::size_t>(w)}, inverse);
  std::vector<Complex> column(static_cast<std::size_t>(h));
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) column[static_cast<std::size_t>(r)] = f(r, c);
    dft_inplace(column, inverse);
    for (Index r = 0; r < h; ++r) f(r, c) = column[static_cast<std::size_t>(r)];
  }
  return f;
}

ComplexGrid dft2(const BandRef& band) { return dft2(ComplexGrid(band.cast<Complex>()), false); }

namespace {

void require_same_dims(const BandRef& a, const BandRef& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": band dimensions differ");
  }
}

RowMatrix normalized_weights(const RowMatrix& magnitude, double alpha) {
  RowMatrix w = magnitude.array().pow(alpha);
  const double peak = w.maxCoeff();
  if (peak > 0) w /= peak;
  else w.setZero();
  return w;
}

}  // namespace

FrequencyDistance freq_distance_band(const BandRef& gt, const BandRef& sr) {
  require_same_dims(gt, sr, "freq_distance_band");
  FrequencyDistance d;
  d.grid = (dft2(gt) - dft2(sr)).cwiseAbs2();
  d.mean = d.grid.sum() / static_cast<double>(d.grid.size());
  return d;
}

RowMatrix weight_matrix(const BandRef& gt, const BandRef& sr, double alpha) {
  require_same_dims(gt, sr, "weight_matrix");
  if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  const RowMatrix magnitude = (dft2(gt) - dft2(sr)).cwiseAbs();
  if (magnitude.maxCoeff() == 0) return RowMatrix::Zero(magnitude.rows(), magnitude.cols());
  return normalized_weights(magnitude, alpha);
}

namespace {

void require_cube_pair(const Tensor& gt, const Tensor& sr, const char* what) {
  if (gt.rank() != 3 || gt.shape() != sr.shape()) {
    throw ShapeError(std::string(what) + " expects matching [B, H, W] cubes, got " + to_string(gt.shape()) +
                     " and " + to_string(sr.shape()));
  }
}

}  // namespace

std::vector<RowMatrix> hfl_weights(const Tensor& gt, const Tensor& sr, double alpha) {
  require_cube_pair(gt, sr, "hfl_weights");
  std::vector<RowMatrix> out;
  for (Index k = 0; k < gt.dim(0); ++k) out.push_back(weight_matrix(gt.channel(k), sr.channel(k), alpha));
  return out;
}

Tensor weighted_freq_loss(const Tensor& gt, const Tensor& sr, std::span<const RowMatrix> weights) {
  require_cube_pair(gt, sr, "weighted_freq_loss");
  const Index bands = gt.dim(0), h = gt.dim(1), w = gt.dim(2);
  if (static_cast<Index>(weights.size()) != bands) throw ShapeError("weighted_freq_loss: one weight grid per band");
  const double inv_hw = 1.0 / static_cast<double>(h * w);

  // Per band: the weighted residual spectrum w ⊙ (F_sr - F_gt), kept for backward.
  std::vector<ComplexGrid> weighted(static_cast<std::size_t>(bands));
  double loss = 0;
  for (Index k = 0; k < bands; ++k) {
    const RowMatrix& wk = weights[static_cast<std::size_t>(k)];
    if (wk.rows() != h || wk.cols() != w) throw ShapeError("weighted_freq_loss: weight grid dims differ");
    const ComplexGrid diff = dft2(BandRef(sr.channel(k))) - dft2(BandRef(gt.channel(k)));
    loss += inv_hw * (wk.array() * diff.cwiseAbs2().array()).sum();
    weighted[static_cast<std::size_t>(k)] = wk.cast<Complex>().cwiseProduct(diff);
  }

  return detail::make_result(
      "hfl", Shape{}, Vector::Constant(1, loss), {gt, sr},
      [weighted = std::move(weighted), bands, h, w, inv_hw](const Vector& g, detail::GradSinks in) {
        // d/dX Σ w|F(X) - G|² = 2·Re(conj(A)·(w ⊙ (F - G))·conj(B)), the
        // unnormalised inverse DFT of the weighted residual.
        for (Index k = 0; k < bands; ++k) {
          const RowMatrix grad = 2.0 * inv_hw * g[0] * dft2(weighted[static_cast<std::size_t>(k)], true).real();
          const Eigen::Map<const Vector> flat(grad.data(), h * w);
          if (in[1]) in[1]->segment(k * h * w, h * w) += flat;
          if (in[0]) in[0]->segment(k * h * w, h * w) -= flat;
        }
      });
}

Tensor hfl(const Tensor& gt, const Tensor& sr, const FreqLossConfig& cfg) {
  if (cfg.alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  return weighted_freq_loss(gt, sr, hfl_weights(gt, sr, cfg.alpha));
}

LossTerms total_loss(const Tensor& gt, const Tensor& sr, const FreqLossConfig& cfg) {
  if (gt.shape() != sr.shape()) {
    throw ShapeError("total_loss: shapes differ, " + to_string(gt.shape()) + " vs " + to_string(sr.shape()));
  }
  if (cfg.beta < 0) throw std::invalid_argument("beta must be >= 0");
  LossTerms t;
  t.l1 = mean(abs(sr - gt));
  t.hfl = hfl(gt, sr, cfg);
  t.total = t.l1 + scale(t.hfl, cfg.beta);
  return t;
}

ComplexGrid fftshift(const ComplexGrid& grid) {
  const Index h = grid.rows(), w = grid.cols();
  ComplexGrid out(h, w);
  for (Index u = 0; u < h; ++u)
    for (Index v = 0; v < w; ++v) out((u + h / 2) % h, (v + w / 2) % w) = grid(u, v);
  return out;
}

RowMatrix spectrum_power(const BandRef& band) {
  constexpr double eps = 1e-12;
  const ComplexGrid shifted = fftshift(dft2(band));
  return shifted.cwiseAbs2().unaryExpr([](double p) { return 10.0 * std::log10(p + eps); });
}

}  // namespace srdnet
