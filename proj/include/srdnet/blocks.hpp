#pragma once

#include <array>
#include <optional>
#include <vector>

#include "srdnet/ops.hpp"
#include "srdnet/tensor.hpp"

namespace srdnet {

/// Three Conv+ReLU layers.
using Subnet = std::array<Conv2dLayer, 3>;

/// Isomeric group module. The entry conv produces the residual term; two
/// identical `width`-channel subnets (the symmetric group) and one
/// 2·width-channel subnet (the complementary block) read from it, and a fuse
/// conv returns to c_feat channels.
struct IgmParams {
  Conv2dLayer entry;   // c_feat -> c_feat
  Subnet sgb_a;        // c_feat -> width -> width -> width
  Subnet sgb_b;        // same structure as sgb_a
  Subnet cb;           // c_feat -> 2w -> 2w -> 2w
  Conv2dLayer fuse;    // 2w -> c_feat
};

/// Hyperspectral self-attention: spectral (channel) attention followed by a
/// two-level pyramid spatial attention.
struct HslParams {
  Conv2dLayer query;   // C -> 1, 1x1
  Conv2dLayer key;     // C -> C/2, 1x1
  Conv2dLayer value;   // C/2 -> C, 1x1
  Conv2dLayer fusion;  // C -> C, 3x3
  Conv2dLayer down1;   // 2C -> C, 3x3 over [max, avg] pooled fusion
  Conv2dLayer down2;   // 2C -> C, 3x3 over [max, avg] pooled level 1
};

/// 3D-unit branch. The 2D map [C, H, W] is lifted to [1, C, H, W] so the
/// spectral kernels run along the feature axis.
struct Unit3dParams {
  Conv3dLayer entry;                  // 1 -> c_3d, 1x1x1
  std::vector<SepConv3dLayer> units;  // c_3d -> c_3d each
  Conv3dLayer fuse;                   // N·c_3d -> 1, 1x1x1
};

IgmParams make_igm(Index c_feat, Index width, Rng& rng);
HslParams make_hsl(Index channels, Rng& rng);
Unit3dParams make_unit3d(Index c_3d, Index n_units, Rng& rng);

Tensor igm_forward(const Tensor& x0, const IgmParams& p);

struct SpectralAttention {
  Tensor weights;  // [C, 1, 1], in (0, 1)
  Tensor query;    // [1, HW], softmax over positions
  Tensor value;    // [C/2, 1]
  Tensor output;   // target ⊙ weights
};

/// Attention weights computed from `source` and applied to `target`.
SpectralAttention spectral_attention(const Tensor& source, const Tensor& target, const HslParams& p);
/// Weights computed from and applied to `x`.
SpectralAttention hsl_spectral_attention(const Tensor& x, const HslParams& p);

struct SpatialAttention {
  Tensor fusion;  // conv of the input
  Tensor map;     // [C, H, W], in (0, 1)
  Tensor output;  // fusion ⊙ map
};

/// Requires H, W >= 4 so that the pyramid can pool twice.
SpatialAttention hsl_spatial_attention(const Tensor& y_spectral, const HslParams& p);

/// (spectral + spatial) + y_igm. The spectral weights are computed from
/// y_igm + feedback; pass an empty optional when the 3D branch is absent.
Tensor hsl_forward(const Tensor& y_igm, const std::optional<Tensor>& feedback, const HslParams& p);

struct Branch3dResult {
  Tensor squeezed;  // [C, H, W] after fuse + ReLU, before upsampling
  Tensor output;    // [C, r_l·H, r_l·W]
};

/// `input` is x0 + y_igm (or x0 alone when the IGM is absent).
Branch3dResult branch3d_forward(const Tensor& input, const Unit3dParams& p, Index local_scale);
Tensor branch3d_forward(const Tensor& x0, const Tensor& y_igm, const Unit3dParams& p, Index local_scale);

/// Parallel 2D/3D module. A branch or block is active exactly when its
/// parameters are present; `post2d` marks the 2D branch.
struct PamParams {
  std::optional<IgmParams> igm;
  std::optional<HslParams> hsl;
  std::optional<Conv2dLayer> post2d;    // c_feat -> c_feat, 3x3
  std::optional<Unit3dParams> unit3d;
  std::optional<Conv2dLayer> feedback;  // 1x1 projection of the 3D features into HSL
};

Tensor pam_forward(const Tensor& x0, const PamParams& p, Index local_scale);

}  // namespace srdnet
