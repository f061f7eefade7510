#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "srdnet/blocks.hpp"
#include "srdnet/data.hpp"
#include "srdnet/ops.hpp"
#include "srdnet/tensor.hpp"

namespace srdnet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Structural switches for the ablation study. A disabled parent disables its
/// children: no PAM means no branches, no 2D branch means no IGM or HSL.
struct Ablation {
  bool use_pam = true;
  bool use_2d = true;
  bool use_3d = true;
  bool use_igm = true;
  bool use_hsl = true;

  bool operator==(const Ablation&) const = default;
};

/// Clears the named components ("pam", "2d", "3d", "igm", "hsl") and
/// cascades to their children. Throws ConfigError on an unknown name or when
/// PAM would be left with no branch.
Ablation ablate(std::vector<std::string> names);

struct ModelConfig {
  Index bands = 31;
  Index scale = 4;
  Index n_units = 3;
  Index c_feat = 64;
  Index c_3d = 16;
  Index igm_width = 32;
  Index local_scale = 2;   // r_l
  Index global_scale = 2;  // r_g
  Ablation ablation;

  /// Config for `bands` and `scale` with the balanced local/global split.
  static ModelConfig make(Index bands, Index scale);
  /// Throws ConfigError on any inconsistency.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Closest factor pair a <= b with a·b = r: 2→(1,2), 3→(1,3), 4→(2,2), 8→(2,4).
std::pair<Index, Index> balanced_split(Index scale);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// conv3×3 → ReLU → conv3×3, plus the identity.
struct ResidualBlock {
  Conv2dLayer first;
  Conv2dLayer second;
};

Tensor residual_block(const Tensor& x, const ResidualBlock& block);

struct ModelParameters {
  Conv2dLayer head;        // bands -> c_feat
  ResidualBlock res1;
  Conv2dLayer local_proj;  // c_feat -> c_feat, 1x1, feeds the local bicubic skip
  PamParams pam;
  ResidualBlock res2;
  TransposedConv2dLayer global_up;
  Conv2dLayer tail;        // c_feat -> bands

  using Visitor = std::function<void(const std::string& name, Tensor& t)>;
  /// Every learnable tensor in a fixed order.
  void visit(const Visitor& fn);
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  /// Replaces the tensors in visit order.
  void assign(std::span<const Tensor> values);
};

ModelParameters init_parameters(const ModelConfig& cfg, Rng& rng);
Index count_parameters(const ModelParameters& params);
/// Copy with every learnable set to zero.
ModelParameters zeroed(const ModelParameters& params);

/// Smallest LR side the network accepts; the spatial attention pools twice.
inline constexpr Index kMinInputSide = 8;

/// [B, h, w] -> [B, r·h, r·w].
Tensor forward(const Tensor& lr, const ModelConfig& cfg, const ModelParameters& params);
HsiCube super_resolve(const HsiCube& lr, const ModelConfig& cfg, const ModelParameters& params);

// Checkpoints -----------------------------------------------------------------
//
//   "SRDN" | u16 version | u64 n | n bytes of JSON text
//   u64 tensor count, then per tensor:
//     u64 name length | name | u64 rank | rank × u64 dims | f64 data
//
// All integers and floats little-endian.

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  Vector values;
};

struct Checkpoint {
  nlohmann::json meta;  // holds "model" plus anything the writer adds
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const ModelConfig& cfg, const ModelParameters& params);
/// Restores config and parameters; throws DecodeError when a tensor is
/// missing or misshapen.
std::pair<ModelConfig, ModelParameters> load_model(const Checkpoint& ckpt);

}  // namespace srdnet
