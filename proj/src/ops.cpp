#include "srdnet/ops.hpp"

#include <algorithm>
#include <cmath>

#include "srdnet/detail/node.hpp"

namespace srdnet {

using detail::GradSinks;
using detail::make_result;

namespace {

/// Sliding-window geometry of an image [c, d, h, w] under a kd×kh×kw kernel.
/// Depth stride is always 1.
struct Geometry {
  Index c, d, h, w;
  Index kd, kh, kw;
  Index pd, ph, pw;
  Index sh, sw;
  Index od, oh, ow;

  Index rows() const { return c * kd * kh * kw; }
  Index cols() const { return od * oh * ow; }
  Index image_size() const { return c * d * h * w; }
};

Geometry same_geometry(Index c, Index d, Index h, Index w, Index kd, Index kh, Index kw) {
  return {c, d, h, w, kd, kh, kw, kd / 2, kh / 2, kw / 2, 1, 1, d, h, w};
}

/// Visits every (column-matrix slot, image slot) pair that is inside the
/// image. `fn(col_index, image_index)`.
template <typename Fn>
void for_each_tap(const Geometry& g, Fn&& fn) {
  const Index cols = g.cols();
  for (Index ci = 0; ci < g.c; ++ci)
    for (Index kz = 0; kz < g.kd; ++kz)
      for (Index ky = 0; ky < g.kh; ++ky)
        for (Index kx = 0; kx < g.kw; ++kx) {
          const Index row = ((ci * g.kd + kz) * g.kh + ky) * g.kw + kx;
          for (Index oz = 0; oz < g.od; ++oz) {
            const Index iz = oz - g.pd + kz;
            if (iz < 0 || iz >= g.d) continue;
            for (Index oy = 0; oy < g.oh; ++oy) {
              const Index iy = oy * g.sh - g.ph + ky;
              if (iy < 0 || iy >= g.h) continue;
              const Index col_base = row * cols + (oz * g.oh + oy) * g.ow;
              const Index img_base = ((ci * g.d + iz) * g.h + iy) * g.w;
              // Valid ox satisfy 0 <= ox*sw - pw + kx < w.
              const Index lo = std::max<Index>(0, (g.pw - kx + g.sw - 1) / g.sw);
              const Index hi = std::min<Index>(g.ow, (g.w + g.pw - kx + g.sw - 1) / g.sw);
              for (Index ox = lo; ox < hi; ++ox) fn(col_base + ox, img_base + ox * g.sw - g.pw + kx);
            }
          }
        }
}

RowMatrix im2col(const double* image, const Geometry& g) {
  RowMatrix col = RowMatrix::Zero(g.rows(), g.cols());
  double* out = col.data();
  for_each_tap(g, [&](Index ci, Index ii) { out[ci] = image[ii]; });
  return col;
}

void col2im_add(const RowMatrix& col, const Geometry& g, double* image) {
  const double* in = col.data();
  for_each_tap(g, [&](Index ci, Index ii) { image[ii] += in[ci]; });
}

void require_odd(Index k, const char* what) {
  if (k < 1 || k % 2 == 0) throw ShapeError(std::string(what) + ": kernel extents must be odd");
}

/// Shared forward/backward for stride-1 same-padded convolution.
/// x holds a [c_in, d, h, w] image; weight is [c_out, c_in·kd·kh·kw].
Tensor conv_same(const char* op, const Tensor& x, const Tensor& weight, const Tensor& bias,
                 const Geometry& g, Shape out_shape) {
  const Index c_out = weight.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != c_out) throw ShapeError(std::string(op) + ": bias shape");
  const ConstMatrixMap wm(weight.values().data(), c_out, g.rows());
  Vector out(c_out * g.cols());
  {
    const RowMatrix col = im2col(x.values().data(), g);
    MatrixMap om(out.data(), c_out, g.cols());
    om.noalias() = wm * col;
    om.colwise() += bias.values();
  }
  return make_result(op, std::move(out_shape), std::move(out), {x, weight, bias},
                     [x, weight, g, c_out](const Vector& grad, GradSinks in) {
                       const ConstMatrixMap gm(grad.data(), c_out, g.cols());
                       const ConstMatrixMap wm(weight.values().data(), c_out, g.rows());
                       if (in[1]) {
                         const RowMatrix col = im2col(x.values().data(), g);
                         MatrixMap(in[1]->data(), c_out, g.rows()).noalias() += gm * col.transpose();
                       }
                       if (in[2]) *in[2] += gm.rowwise().sum();
                       if (in[0]) {
                         const RowMatrix dcol = wm.transpose() * gm;
                         col2im_add(dcol, g, in[0]->data());
                       }
                     });
}

}  // namespace

// Layer construction ---------------------------------------------------------

namespace {

// Leaky slope sqrt(5) gives the common U(-1/sqrt(fan_in), 1/sqrt(fan_in))
// conv init; plain He init blows up through the stacked residual sums.
const double kInitSlope = std::sqrt(5.0);

}  // namespace

Conv2dLayer make_conv2d(Index c_in, Index c_out, Index k, Rng& rng) {
  require_odd(k, "make_conv2d");
  return {kaiming_uniform({c_out, c_in, k, k}, rng, c_in * k * k, true, kInitSlope), zeros({c_out}, true)};
}

Conv3dLayer make_conv3d(Index c_in, Index c_out, Index kd, Index kh, Index kw, Rng& rng) {
  require_odd(kd, "make_conv3d");
  require_odd(kh, "make_conv3d");
  require_odd(kw, "make_conv3d");
  return {kaiming_uniform({c_out, c_in, kd, kh, kw}, rng, c_in * kd * kh * kw, true, kInitSlope),
          zeros({c_out}, true)};
}

SepConv3dLayer make_sepconv3d(Index c_in, Index c_out, Rng& rng) {
  Conv3dLayer spatial = make_conv3d(c_in, c_out, 1, 3, 3, rng);
  Conv3dLayer spectral = make_conv3d(c_out, c_out, 3, 1, 1, rng);
  return {std::move(spatial), std::move(spectral)};
}

TransposedConv2dLayer make_transposed_conv2d(Index c_in, Index c_out, Index stride, Rng& rng) {
  if (stride < 1) throw ShapeError("transposed conv stride must be >= 1");
  const Index k = stride + 2;
  // Each output pixel receives about c_in·(k/stride)² taps.
  const Index fan_in = std::max<Index>(1, c_in * ((k + stride - 1) / stride) * ((k + stride - 1) / stride));
  return {kaiming_uniform({c_in, c_out, k, k}, rng, fan_in, true, kInitSlope), zeros({c_out}, true), stride};
}

// Convolutions ---------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Conv2dLayer& layer) {
  const Tensor& w = layer.weight;
  if (x.rank() != 3) throw ShapeError("conv2d expects [C, H, W], got " + to_string(x.shape()));
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) throw ShapeError("conv2d weight must be [Co, Ci, k, k]");
  require_odd(w.dim(2), "conv2d");
  if (w.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d channel mismatch: weight " + to_string(w.shape()) + ", input " +
                     to_string(x.shape()));
  }
  const Geometry g = same_geometry(x.dim(0), 1, x.dim(1), x.dim(2), 1, w.dim(2), w.dim(3));
  return conv_same("conv2d", x, w, layer.bias, g, {w.dim(0), x.dim(1), x.dim(2)});
}

Tensor conv3d(const Tensor& x, const Conv3dLayer& layer) {
  const Tensor& w = layer.weight;
  if (x.rank() != 4) throw ShapeError("conv3d expects [C, B, H, W], got " + to_string(x.shape()));
  if (w.rank() != 5) throw ShapeError("conv3d weight must be [Co, Ci, kd, kh, kw]");
  require_odd(w.dim(2), "conv3d");
  require_odd(w.dim(3), "conv3d");
  require_odd(w.dim(4), "conv3d");
  if (w.dim(1) != x.dim(0)) {
    throw ShapeError("conv3d channel mismatch: weight " + to_string(w.shape()) + ", input " +
                     to_string(x.shape()));
  }
  const Geometry g =
      same_geometry(x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), w.dim(4));
  return conv_same("conv3d", x, w, layer.bias, g, {w.dim(0), x.dim(1), x.dim(2), x.dim(3)});
}

Tensor sepconv3d(const Tensor& x, const SepConv3dLayer& layer) {
  return conv3d(conv3d(x, layer.spatial), layer.spectral);
}

Tensor transposed_conv2d(const Tensor& x, const TransposedConv2dLayer& layer) {
  const Tensor& w = layer.weight;
  const Index s = layer.stride;
  if (x.rank() != 3) throw ShapeError("transposed_conv2d expects [C, H, W]");
  if (w.rank() != 4 || w.dim(2) != s + 2 || w.dim(3) != s + 2) {
    throw ShapeError("transposed_conv2d weight must be [Ci, Co, r+2, r+2]");
  }
  if (w.dim(0) != x.dim(0)) throw ShapeError("transposed_conv2d channel mismatch");
  const Index c_in = x.dim(0), c_out = w.dim(1), h = x.dim(1), wd = x.dim(2);
  if (layer.bias.rank() != 1 || layer.bias.dim(0) != c_out) throw ShapeError("transposed_conv2d bias shape");
  const Index k = s + 2;
  // The forward pass is the adjoint of a stride-s convolution that maps the
  // (s·h)×(s·w) output back onto the h×w input grid.
  const Geometry g{c_out, 1, s * h, s * wd, 1, k, k, 0, 1, 1, s, s, 1, h, wd};
  const ConstMatrixMap wm(w.values().data(), c_in, g.rows());
  const ConstMatrixMap xm(x.values().data(), c_in, h * wd);

  Vector out = Vector::Zero(g.image_size());
  {
    const RowMatrix cols = wm.transpose() * xm;
    col2im_add(cols, g, out.data());
    MatrixMap(out.data(), c_out, s * h * s * wd).colwise() += layer.bias.values();
  }
  return make_result("transposed_conv2d", {c_out, s * h, s * wd}, std::move(out), {x, w, layer.bias},
                     [x, w, g, c_in](const Vector& grad, GradSinks in) {
                       const RowMatrix dcols = im2col(grad.data(), g);
                       const ConstMatrixMap wm(w.values().data(), c_in, g.rows());
                       if (in[0]) MatrixMap(in[0]->data(), c_in, g.cols()).noalias() += wm * dcols;
                       if (in[1]) {
                         const ConstMatrixMap xm(x.values().data(), c_in, g.cols());
                         MatrixMap(in[1]->data(), c_in, g.rows()).noalias() += xm * dcols.transpose();
                       }
                       if (in[2]) {
                         *in[2] += ConstMatrixMap(grad.data(), g.c, g.h * g.w).rowwise().sum();
                       }
                     });
}

// Activations ----------------------------------------------------------------

Tensor relu(const Tensor& x) {
  Vector out = x.values().cwiseMax(0.0);
  return make_result("relu", x.shape(), std::move(out), {x},
                     [xv = x.values()](const Vector& g, GradSinks in) {
                       if (in[0]) *in[0] += (xv.array() > 0.0).select(g, 0.0);
                     });
}

Tensor sigmoid(const Tensor& x) {
  Vector out = x.values().unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return make_result("sigmoid", x.shape(), out, {x}, [y = out](const Vector& g, GradSinks in) {
    if (in[0]) *in[0] += (g.array() * y.array() * (1.0 - y.array())).matrix();
  });
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax axis out of range");
  Index outer = 1, inner = 1;
  const Index n = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  Vector y(x.size());
  const Vector& xv = x.values();
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * n * inner + i;
      double mx = xv[base];
      for (Index j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0;
      for (Index j = 0; j < n; ++j) total += (y[base + j * inner] = std::exp(xv[base + j * inner] - mx));
      for (Index j = 0; j < n; ++j) y[base + j * inner] /= total;
    }
  return make_result("softmax", x.shape(), y, {x},
                     [y, outer, inner, n](const Vector& g, GradSinks in) {
                       if (!in[0]) return;
                       for (Index o = 0; o < outer; ++o)
                         for (Index i = 0; i < inner; ++i) {
                           const Index base = o * n * inner + i;
                           double dot = 0;
                           for (Index j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
                           for (Index j = 0; j < n; ++j) {
                             (*in[0])[base + j * inner] += y[base + j * inner] * (g[base + j * inner] - dot);
                           }
                         }
                     });
}

// Pooling --------------------------------------------------------------------

Tensor pool2d(PoolKind kind, const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("pool2d expects [C, H, W], got " + to_string(x.shape()));
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const Index oh = (h + 1) / 2, ow = (w + 1) / 2;
  const Vector& xv = x.values();
  Vector out(c * oh * ow);
  // For max pooling, the source index of each output; for avg, unused.
  std::vector<Index> source(kind == PoolKind::max ? out.size() : 0);

  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < oh; ++y)
      for (Index xx = 0; xx < ow; ++xx) {
        const Index ys[2] = {2 * y, std::min(2 * y + 1, h - 1)};
        const Index xs[2] = {2 * xx, std::min(2 * xx + 1, w - 1)};
        const Index o = (ch * oh + y) * ow + xx;
        if (kind == PoolKind::max) {
          Index best = (ch * h + ys[0]) * w + xs[0];
          for (Index yy : ys)
            for (Index x2 : xs) {
              const Index i = (ch * h + yy) * w + x2;
              if (xv[i] > xv[best]) best = i;
            }
          out[o] = xv[best];
          source[static_cast<std::size_t>(o)] = best;
        } else {
          double total = 0;
          for (Index yy : ys)
            for (Index x2 : xs) total += xv[(ch * h + yy) * w + x2];
          out[o] = 0.25 * total;
        }
      }

  if (kind == PoolKind::max) {
    return make_result("max_pool2d", {c, oh, ow}, std::move(out), {x},
                       [source = std::move(source)](const Vector& g, GradSinks in) {
                         if (!in[0]) return;
                         for (std::size_t o = 0; o < source.size(); ++o) (*in[0])[source[o]] += g[static_cast<Index>(o)];
                       });
  }
  return make_result("avg_pool2d", {c, oh, ow}, std::move(out), {x},
                     [c, h, w, oh, ow](const Vector& g, GradSinks in) {
                       if (!in[0]) return;
                       for (Index ch = 0; ch < c; ++ch)
                         for (Index y = 0; y < oh; ++y)
                           for (Index xx = 0; xx < ow; ++xx) {
                             const double share = 0.25 * g[(ch * oh + y) * ow + xx];
                             const Index ys[2] = {2 * y, std::min(2 * y + 1, h - 1)};
                             const Index xs[2] = {2 * xx, std::min(2 * xx + 1, w - 1)};
                             for (Index yy : ys)
                               for (Index x2 : xs) (*in[0])[(ch * h + yy) * w + x2] += share;
                           }
                     });
}

// Resampling -----------------------------------------------------------------

namespace {

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

Index reflect(Index i, Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

}  // namespace

RowMatrix interpolation_matrix(ResampleKind kind, Index in, Index out) {
  if (in < 1 || out < 1) throw ShapeError("interpolation_matrix: sizes must be >= 1");
  RowMatrix r = RowMatrix::Zero(out, in);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    const auto b = static_cast<Index>(base);
    if (kind == ResampleKind::bicubic) {
      for (Index j = -1; j <= 2; ++j) r(o, reflect(b + j, in)) += cubic_weight(t - static_cast<double>(j));
    } else {
      r(o, reflect(b, in)) += 1.0 - t;
      r(o, reflect(b + 1, in)) += t;
    }
  }
  return r;
}

Tensor resize(ResampleKind kind, const Tensor& x, Index out_h, Index out_w) {
  if (x.rank() != 3) throw ShapeError("resize expects [C, H, W], got " + to_string(x.shape()));
  if (out_h < 1 || out_w < 1) throw ShapeError("resize: output size must be >= 1");
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h == h && out_w == w) {
    return make_result("resize", x.shape(), x.values(), {x}, [](const Vector& g, GradSinks in) {
      if (in[0]) *in[0] += g;
    });
  }
  RowMatrix rh = interpolation_matrix(kind, h, out_h);
  RowMatrix rw = interpolation_matrix(kind, w, out_w);
  Vector out(c * out_h * out_w);
  for (Index ch = 0; ch < c; ++ch) {
    MatrixMap(out.data() + ch * out_h * out_w, out_h, out_w).noalias() = rh * x.channel(ch) * rw.transpose();
  }
  return make_result("resize", {c, out_h, out_w}, std::move(out), {x},
                     [rh = std::move(rh), rw = std::move(rw), c, h, w, out_h, out_w](const Vector& g,
                                                                                     GradSinks in) {
                       if (!in[0]) return;
                       for (Index ch = 0; ch < c; ++ch) {
                         const ConstMatrixMap gm(g.data() + ch * out_h * out_w, out_h, out_w);
                         MatrixMap(in[0]->data() + ch * h * w, h, w).noalias() += rh.transpose() * gm * rw;
                       }
                     });
}

Tensor resample(ResampleKind kind, const Tensor& x, double factor) {
  if (x.rank() != 3) throw ShapeError("resample expects [C, H, W], got " + to_string(x.shape()));
  if (!(factor > 0)) throw ShapeError("resample factor must be positive");
  const auto out_h = static_cast<Index>(std::lround(factor * static_cast<double>(x.dim(1))));
  const auto out_w = static_cast<Index>(std::lround(factor * static_cast<double>(x.dim(2))));
  if (out_h < 1 || out_w < 1) throw ShapeError("resample: factor leaves an empty image");
  return resize(kind, x, out_h, out_w);
}

}  // namespace srdnet
