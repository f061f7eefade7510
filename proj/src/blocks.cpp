#include "srdnet/blocks.hpp"

namespace srdnet {

namespace {

Subnet make_subnet(Index c_in, Index width, Rng& rng) {
  Conv2dLayer first = make_conv2d(c_in, width, 3, rng);
  Conv2dLayer second = make_conv2d(width, width, 3, rng);
  Conv2dLayer third = make_conv2d(width, width, 3, rng);
  return {std::move(first), std::move(second), std::move(third)};
}

Tensor subnet_forward(const Tensor& x, const Subnet& net) {
  Tensor y = x;
  for (const Conv2dLayer& layer : net) y = relu(conv2d(y, layer));
  return y;
}

Tensor upsample_local(const Tensor& x, Index local_scale) {
  return resize(ResampleKind::bicubic, x, local_scale * x.dim(1), local_scale * x.dim(2));
}

}  // namespace

IgmParams make_igm(Index c_feat, Index width, Rng& rng) {
  IgmParams p;
  p.entry = make_conv2d(c_feat, c_feat, 3, rng);
  p.sgb_a = make_subnet(c_feat, width, rng);
  p.sgb_b = make_subnet(c_feat, width, rng);
  p.cb = make_subnet(c_feat, 2 * width, rng);
  p.fuse = make_conv2d(2 * width, c_feat, 3, rng);
  return p;
}

HslParams make_hsl(Index channels, Rng& rng) {
  if (channels % 2 != 0) throw ShapeError("HSL needs an even channel count");
  HslParams p;
  p.query = make_conv2d(channels, 1, 1, rng);
  p.key = make_conv2d(channels, channels / 2, 1, rng);
  p.value = make_conv2d(channels / 2, channels, 1, rng);
  p.fusion = make_conv2d(channels, channels, 3, rng);
  p.down1 = make_conv2d(2 * channels, channels, 3, rng);
  p.down2 = make_conv2d(2 * channels, channels, 3, rng);
  return p;
}

Unit3dParams make_unit3d(Index c_3d, Index n_units, Rng& rng) {
  if (n_units < 1) throw ShapeError("the 3D branch needs at least one unit");
  Unit3dParams p;
  p.entry = make_conv3d(1, c_3d, 1, 1, 1, rng);
  for (Index i = 0; i < n_units; ++i) p.units.push_back(make_sepconv3d(c_3d, c_3d, rng));
  p.fuse = make_conv3d(n_units * c_3d, 1, 1, 1, 1, rng);
  return p;
}

// IGM ------------------------------------------------------------------------

Tensor igm_forward(const Tensor& x0, const IgmParams& p) {
  const Tensor entry = relu(conv2d(x0, p.entry));
  const Tensor sgb = concat({subnet_forward(entry, p.sgb_a), subnet_forward(entry, p.sgb_b)}, 0);
  const Tensor cb = subnet_forward(entry, p.cb);
  return conv2d(cb + sgb, p.fuse) + entry;
}

// HSL ------------------------------------------------------------------------

SpectralAttention spectral_attention(const Tensor& source, const Tensor& target, const HslParams& p) {
  if (source.rank() != 3) throw ShapeError("spectral attention expects [C, H, W]");
  const Index c = source.dim(0), hw = source.dim(1) * source.dim(2);
  if (c % 2 != 0) throw ShapeError("spectral attention needs an even channel count");
  if (target.shape() != source.shape()) throw ShapeError("spectral attention: source/target mismatch");

  SpectralAttention out;
  out.query = softmax(reshape(conv2d(source, p.query), {1, hw}), 1);
  const Tensor key = reshape(conv2d(source, p.key), {c / 2, hw});
  out.value = matmul(key, transpose(out.query));
  out.weights = sigmoid(conv2d(reshape(out.value, {c / 2, 1, 1}), p.value));
  out.output = target * out.weights;
  return out;
}

SpectralAttention hsl_spectral_attention(const Tensor& x, const HslParams& p) {
  return spectral_attention(x, x, p);
}

SpatialAttention hsl_spatial_attention(const Tensor& y_spectral, const HslParams& p) {
  if (y_spectral.rank() != 3) throw ShapeError("spatial attention expects [C, H, W]");
  const Index h = y_spectral.dim(1), w = y_spectral.dim(2);
  if (h < 4 || w < 4) {
    throw ShapeError("spatial attention needs H, W >= 4, got " + to_string(y_spectral.shape()));
  }
  auto down = [](const Tensor& x, const Conv2dLayer& conv) {
    return conv2d(concat({pool2d(PoolKind::max, x), pool2d(PoolKind::avg, x)}, 0), conv);
  };

  SpatialAttention out;
  out.fusion = conv2d(y_spectral, p.fusion);
  const Tensor level1 = down(out.fusion, p.down1);
  const Tensor level2 = down(level1, p.down2);
  const Tensor pyramid =
      resize(ResampleKind::bilinear, level2, level1.dim(1), level1.dim(2)) + level1;
  out.map = sigmoid(resize(ResampleKind::bilinear, pyramid, h, w) + out.fusion);
  out.output = out.fusion * out.map;
  return out;
}

Tensor hsl_forward(const Tensor& y_igm, const std::optional<Tensor>& feedback, const HslParams& p) {
  if (feedback && feedback->shape() != y_igm.shape()) {
    throw ShapeError("HSL feedback " + to_string(feedback->shape()) + " does not match " +
                     to_string(y_igm.shape()));
  }
  const Tensor source = feedback ? y_igm + *feedback : y_igm;
  const SpectralAttention spectral = spectral_attention(source, y_igm, p);
  const SpatialAttention spatial = hsl_spatial_attention(spectral.output, p);
  return (spectral.output + spatial.output) + y_igm;
}

// 3D branch ------------------------------------------------------------------

Branch3dResult branch3d_forward(const Tensor& input, const Unit3dParams& p, Index local_scale) {
  if (input.rank() != 3) throw ShapeError("3D branch expects [C, H, W]");
  if (local_scale < 1) throw ShapeError("local scale must be >= 1");
  const Index c = input.dim(0), h = input.dim(1), w = input.dim(2);

  Tensor y = conv3d(reshape(input, {1, c, h, w}), p.entry);
  std::vector<Tensor> outputs;
  outputs.reserve(p.units.size());
  for (const SepConv3dLayer& unit : p.units) {
    y = relu(conv3d(relu(conv3d(y, unit.spatial)), unit.spectral));
    outputs.push_back(y);
  }
  const Tensor fused = relu(conv3d(concat(outputs, 0), p.fuse));
  Branch3dResult out;
  out.squeezed = reshape(fused, {c, h, w});
  out.output = upsample_local(out.squeezed, local_scale);
  return out;
}

Tensor branch3d_forward(const Tensor& x0, const Tensor& y_igm, const Unit3dParams& p, Index local_scale) {
  if (x0.shape() != y_igm.shape()) throw ShapeError("3D branch: x0 and y_igm shapes differ");
  return branch3d_forward(x0 + y_igm, p, local_scale).output;
}

// PAM ------------------------------------------------------------------------

Tensor pam_forward(const Tensor& x0, const PamParams& p, Index local_scale) {
  const bool has_2d = p.post2d.has_value();
  const bool has_3d = p.unit3d.has_value();
  if (!has_2d && !has_3d) throw ShapeError("PAM needs at least one branch");

  const bool has_igm = has_2d && p.igm.has_value();
  const Tensor y_igm = has_igm ? igm_forward(x0, *p.igm) : x0;

  std::optional<Branch3dResult> branch3d;
  std::optional<Tensor> feedback;
  if (has_3d) {
    branch3d = branch3d_forward(has_igm ? x0 + y_igm : x0, *p.unit3d, local_scale);
    if (has_2d && p.hsl && p.feedback) feedback = conv2d(branch3d->squeezed, *p.feedback);
  }
  if (!has_2d) return branch3d->output;

  const Tensor y_hsl = p.hsl ? hsl_forward(y_igm, feedback, *p.hsl) : y_igm;
  const Tensor y_2d = upsample_local(relu(conv2d(y_hsl, *p.post2d)), local_scale);
  if (!has_3d) return y_2d;
  if (y_2d.shape() != branch3d->output.shape()) {
    throw std::logic_error("PAM branch shapes diverged: " + to_string(y_2d.shape()) + " vs " +
                           to_string(branch3d->output.shape()));
  }
  return y_2d + branch3d->output;
}

}  // namespace srdnet
