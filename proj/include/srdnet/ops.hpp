#pragma once

#include "srdnet/tensor.hpp"

namespace srdnet {

/// 2D convolution with odd k×k kernel, stride 1 and zero "same" padding.
/// weight: [C_out, C_in, k, k], bias: [C_out].
struct Conv2dLayer {
  Tensor weight;
  Tensor bias;
};

/// 3D convolution over [C, B, H, W] inputs with odd kernel extents, stride 1
/// and zero "same" padding. weight: [C_out, C_in, kd, kh, kw].
struct Conv3dLayer {
  Tensor weight;
  Tensor bias;
};

/// Factored 3D kernel: a 1×3×3 spatial stage followed by a 3×1×1 spectral
/// stage.
struct SepConv3dLayer {
  Conv3dLayer spatial;
  Conv3dLayer spectral;
};

/// Stride-r transposed convolution with kernel r+2 and padding 1, which gives
/// an output of exactly r× the input. weight: [C_in, C_out, r+2, r+2].
struct TransposedConv2dLayer {
  Tensor weight;
  Tensor bias;
  Index stride = 1;
};

Conv2dLayer make_conv2d(Index c_in, Index c_out, Index k, Rng& rng);
Conv3dLayer make_conv3d(Index c_in, Index c_out, Index kd, Index kh, Index kw, Rng& rng);
SepConv3dLayer make_sepconv3d(Index c_in, Index c_out, Rng& rng);
TransposedConv2dLayer make_transposed_conv2d(Index c_in, Index c_out, Index stride, Rng& rng);

/// Cross-correlation: out[o,y,x] = b[o] + sum w[o,i,dy,dx] x[i,y+dy-p,x+dx-p].
Tensor conv2d(const Tensor& x, const Conv2dLayer& layer);
Tensor conv3d(const Tensor& x, const Conv3dLayer& layer);
/// Spatial then spectral stage; activations are the caller's business.
Tensor sepconv3d(const Tensor& x, const SepConv3dLayer& layer);
Tensor transposed_conv2d(const Tensor& x, const TransposedConv2dLayer& layer);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

enum class PoolKind { max, avg };

/// 2×2 window, stride 2 over [C, H, W]. Odd H or W is first padded by
/// replicating the last row/column, so the output is ceil(H/2)×ceil(W/2).
/// Max routes the gradient to the first maximal element in scan order.
Tensor pool2d(PoolKind kind, const Tensor& x);

enum class ResampleKind { bicubic, bilinear };

/// Separable interpolation of a [C, H, W] tensor to out_h × out_w.
/// Half-pixel centres, bicubic a = -0.5, symmetric reflection at the edges.
/// Equal sizes copy the input unchanged.
Tensor resize(ResampleKind kind, const Tensor& x, Index out_h, Index out_w);
/// Resize by `factor` to round(factor·H) × round(factor·W).
Tensor resample(ResampleKind kind, const Tensor& x, double factor);

/// The interpolation operator for one axis as a dense out×in matrix; the
/// resampled channel is R_h · X · R_wᵀ.
RowMatrix interpolation_matrix(ResampleKind kind, Index in, Index out);

}  // namespace srdnet
