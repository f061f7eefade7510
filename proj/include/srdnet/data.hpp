#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "srdnet/tensor.hpp"

namespace srdnet {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hyperspectral cube, band-major: voxel (b, y, x) at (b·H + y)·W + x.
struct HsiCube {
  Index bands = 0;
  Index height = 0;
  Index width = 0;
  Vector voxels;
  std::optional<std::vector<double>> wavelengths;  // nm, one per band

  HsiCube() = default;
  HsiCube(Index b, Index h, Index w);
  HsiCube(Index b, Index h, Index w, Vector values);

  ConstMatrixMap band(Index k) const { return {voxels.data() + k * height * width, height, width}; }
  MatrixMap band(Index k) { return {voxels.data() + k * height * width, height, width}; }
  double operator()(Index b, Index y, Index x) const { return voxels[(b * height + y) * width + x]; }
  double& operator()(Index b, Index y, Index x) { return voxels[(b * height + y) * width + x]; }

  Shape shape() const { return {bands, height, width}; }
  Tensor to_tensor(bool requires_grad = false) const { return Tensor(shape(), voxels, requires_grad); }
  static HsiCube from_tensor(const Tensor& t);
};

/// Throws ShapeError unless both cubes have identical dimensions.
void require_same_shape(const HsiCube& a, const HsiCube& b, const char* what);

// HSIC binary format --------------------------------------------------------
//
//   "HSIC" | u16 version | u32 B | u32 H | u32 W | u8 flags
//   [B × f64 wavelengths if flags & 1] | B·H·W × f64 voxels, band-major
//
// All integers and floats little-endian.

inline constexpr std::uint16_t kHsicVersion = 1;
inline constexpr std::size_t kHsicHeaderBytes = 19;

std::vector<std::uint8_t> encode_hsic(const HsiCube& cube);
HsiCube decode_hsic(std::span<const std::uint8_t> bytes);
void write_hsic(const HsiCube& cube, const std::filesystem::path& path);
HsiCube read_hsic(const std::filesystem::path& path);

// Synthetic data ------------------------------------------------------------

enum class SynthKind { gradient, sinusoid, checker, mixture };

SynthKind parse_synth_kind(const std::string& name);

/// Deterministic cube with values in [0, 1] whose bands vary smoothly with
/// the band index.
HsiCube synth_cube(SynthKind kind, Index bands, Index height, Index width, std::uint64_t seed);

/// Per-cube min-max normalisation to [0, 1]; a constant cube maps to zeros.
HsiCube normalize(const HsiCube& cube);

// Degradation and patches ---------------------------------------------------

/// Bicubic downsampling by `scale`, after cropping H and W to multiples of it.
HsiCube degrade(const HsiCube& hr, Index scale);
HsiCube crop(const HsiCube& cube, Index y0, Index x0, Index h, Index w);

struct PatchPair {
  HsiCube lr;
  HsiCube hr;
  std::string source;
  Index offset_y = 0;
  Index offset_x = 0;
  std::string augmentation = "none";
};

/// `count` random (scale·patch)² HR crops, each degraded to patch² LR.
std::vector<PatchPair> extract_patches(const HsiCube& cube, Index count, Index patch, Index scale, Rng& rng,
                                       const std::string& source = "");

enum class Geometric { none, rot90, rot180, rot270, hflip };

struct Augmentation {
  Geometric geometric = Geometric::none;
  double zoom = 1.0;  // 1, 0.75 or 0.5
};

std::string to_string(const Augmentation& a);

/// Rotation/flip act on both halves of the pair. Zoom resizes the HR patch
/// bicubically, crops it to a multiple of `scale` and degrades it again.
PatchPair augment(const PatchPair& pair, const Augmentation& a, Index scale);
Augmentation random_augmentation(Rng& rng);

HsiCube rotate90(const HsiCube& cube, int quarter_turns);
HsiCube hflip(const HsiCube& cube);

// Manifest ------------------------------------------------------------------

enum class Split { train, val, test };

struct ManifestEntry {
  std::filesystem::path path;
  Split split = Split::train;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<std::filesystem::path> paths(Split split) const;
};

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// Shuffles `paths` and labels 10% val, 10% test (rounded down), rest train.
DatasetManifest make_manifest(std::vector<std::filesystem::path> paths, std::uint64_t seed);
/// Line-oriented `path<TAB>split`. Relative paths resolve against the
/// manifest's directory.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace srdnet
