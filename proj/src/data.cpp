#include "srdnet/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "srdnet/ops.hpp"

namespace srdnet {

HsiCube::HsiCube(Index b, Index h, Index w) : HsiCube(b, h, w, Vector::Zero(b * h * w)) {}

HsiCube::HsiCube(Index b, Index h, Index w, Vector values)
    : bands(b), height(h), width(w), voxels(std::move(values)) {
  if (b < 1 || h < 1 || w < 1) throw ShapeError("cube dimensions must be >= 1");
  if (voxels.size() != b * h * w) throw ShapeError("cube voxel count does not match its dimensions");
}

HsiCube HsiCube::from_tensor(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("a cube tensor must be [B, H, W], got " + to_string(t.shape()));
  return HsiCube(t.dim(0), t.dim(1), t.dim(2), t.values());
}

void require_same_shape(const HsiCube& a, const HsiCube& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": cube shapes differ, " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

// HSIC ----------------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U bits;
  if constexpr (std::is_floating_point_v<T>) {
    bits = std::bit_cast<U>(value);
  } else {
    bits = static_cast<U>(value);
  }
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DecodeError("HSIC payload truncated");
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_hsic(const HsiCube& cube) {
  if (cube.wavelengths && static_cast<Index>(cube.wavelengths->size()) != cube.bands) {
    throw ShapeError("wavelength list length must equal the band count");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHsicHeaderBytes + 8 * static_cast<std::size_t>(cube.voxels.size() + cube.bands));
  for (char c : {'H', 'S', 'I', 'C'}) out.push_back(static_cast<std::uint8_t>(c));
  put_le(out, kHsicVersion);
  put_le(out, static_cast<std::uint32_t>(cube.bands));
  put_le(out, static_cast<std::uint32_t>(cube.height));
  put_le(out, static_cast<std::uint32_t>(cube.width));
  out.push_back(cube.wavelengths ? 1 : 0);
  if (cube.wavelengths) {
    for (double w : *cube.wavelengths) put_le(out, w);
  }
  for (Index i = 0; i < cube.voxels.size(); ++i) put_le(out, cube.voxels[i]);
  return out;
}

HsiCube decode_hsic(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(4);
  if (std::memcmp(magic.data(), "HSIC", 4) != 0) throw DecodeError("bad magic: not an HSIC file");
  const auto version = in.uint<std::uint16_t>();
  if (version != kHsicVersion) throw DecodeError("unsupported HSIC version " + std::to_string(version));
  const std::uint64_t b = in.uint<std::uint32_t>();
  const std::uint64_t h = in.uint<std::uint32_t>();
  const std::uint64_t w = in.uint<std::uint32_t>();
  const std::uint8_t flags = in.uint<std::uint8_t>();
  if (b == 0 || h == 0 || w == 0) throw DecodeError("HSIC dimensions must be non-zero");
  if (flags & ~1u) throw DecodeError("unknown HSIC flags");
  // B·H·W < 2^96 always; guard the product against the byte budget instead.
  const std::uint64_t limit = in.remaining() / 8;
  if (b > limit || h > limit || w > limit || b * h > limit || b * h * w > limit) {
    throw DecodeError("HSIC dimensions exceed the payload");
  }
  HsiCube cube(static_cast<Index>(b), static_cast<Index>(h), static_cast<Index>(w));
  if (flags & 1u) {
    std::vector<double> wl(b);
    for (double& v : wl) v = in.f64();
    cube.wavelengths = std::move(wl);
  }
  for (Index i = 0; i < cube.voxels.size(); ++i) cube.voxels[i] = in.f64();
  if (in.remaining() != 0) throw DecodeError("trailing bytes after HSIC payload");
  return cube;
}

void write_hsic(const HsiCube& cube, const std::filesystem::path& path) {
  const auto bytes = encode_hsic(cube);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

HsiCube read_hsic(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_hsic(bytes);
}

// Synthetic cubes -------------------------------------------------------------

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "gradient") return SynthKind::gradient;
  if (name == "sinusoid") return SynthKind::sinusoid;
  if (name == "checker") return SynthKind::checker;
  if (name == "mixture") return SynthKind::mixture;
  throw std::invalid_argument("unknown cube kind '" + name + "'");
}

HsiCube synth_cube(SynthKind kind, Index bands, Index height, Index width, std::uint64_t seed) {
  HsiCube cube(bands, height, width);
  Rng rng(seed);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  // Position of band k in [0, 1].
  auto band_pos = [bands](Index k) { return bands > 1 ? static_cast<double>(k) / static_cast<double>(bands - 1) : 0.0; };
  auto unit = [](Index i, Index n) { return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0; };

  switch (kind) {
    case SynthKind::gradient: {
      const double tilt = rng.uniform(0.0, 1.0);
      for (Index k = 0; k < bands; ++k) {
        const double mix = 0.5 * (tilt + band_pos(k));
        for (Index y = 0; y < height; ++y)
          for (Index x = 0; x < width; ++x) cube(k, y, x) = (1.0 - mix) * unit(x, width) + mix * unit(y, height);
      }
      break;
    }
    case SynthKind::sinusoid: {
      const double fx = rng.uniform(0.02, 0.15), fy = rng.uniform(0.02, 0.15);
      const double phase0 = rng.uniform(0.0, two_pi), dphase = rng.uniform(0.05, 0.2);
      for (Index k = 0; k < bands; ++k) {
        const double phase = phase0 + dphase * static_cast<double>(k);
        for (Index y = 0; y < height; ++y)
          for (Index x = 0; x < width; ++x) {
            cube(k, y, x) = 0.5 + 0.5 * std::sin(two_pi * (fx * static_cast<double>(x) + fy * static_cast<double>(y)) + phase);
          }
      }
      break;
    }
    case SynthKind::checker: {
      const Index cell = 2 + rng.below(7);
      const double lo = rng.uniform(0.1, 0.3), hi = rng.uniform(0.7, 0.9);
      for (Index k = 0; k < bands; ++k) {
        const double contrast = 0.5 + 0.5 * band_pos(k);
        for (Index y = 0; y < height; ++y)
          for (Index x = 0; x < width; ++x) {
            const bool on = ((y / cell) + (x / cell)) % 2 == 0;
            const double mid = 0.5 * (lo + hi);
            cube(k, y, x) = mid + contrast * ((on ? hi : lo) - mid);
          }
      }
      break;
    }
    case SynthKind::mixture: {
      // Linear mixing of smooth endmember spectra with smooth abundance maps.
      constexpr int kEndmembers = 3;
      struct Endmember {
        double centre, width, fx, fy, phase;
      };
      std::array<Endmember, kEndmembers> em{};
      for (auto& e : em) {
        e = {rng.uniform(0.0, 1.0), rng.uniform(0.25, 0.5), rng.uniform(0.03, 0.2),
             rng.uniform(0.03, 0.2), rng.uniform(0.0, two_pi)};
      }
      // Illumination shared by every band, as from terrain shading; keeps
      // neighbouring bands correlated even where endmember spectra cross.
      const double sx = rng.uniform(0.01, 0.05), sy = rng.uniform(0.01, 0.05), sphase = rng.uniform(0.0, two_pi);
      for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
          const double shade = 0.6 + 0.4 * std::sin(two_pi * (sx * static_cast<double>(x) +
                                                              sy * static_cast<double>(y)) + sphase);
          std::array<double, kEndmembers> abundance{};
          double total = 0;
          for (int m = 0; m < kEndmembers; ++m) {
            const double field = 2.0 * std::sin(two_pi * (em[m].fx * static_cast<double>(x) +
                                                          em[m].fy * static_cast<double>(y)) + em[m].phase);
            total += (abundance[m] = std::exp(field));
          }
          for (Index k = 0; k < bands; ++k) {
            double v = 0;
            for (int m = 0; m < kEndmembers; ++m) {
              const double d = (band_pos(k) - em[m].centre) / em[m].width;
              v += abundance[m] / total * (0.15 + 0.8 * std::exp(-0.5 * d * d));
            }
            cube(k, y, x) = shade * v;
          }
        }
      break;
    }
  }
  return cube;
}

HsiCube normalize(const HsiCube& cube) {
  HsiCube out = cube;
  const double lo = cube.voxels.minCoeff(), hi = cube.voxels.maxCoeff();
  if (hi > lo) {
    out.voxels = (cube.voxels.array() - lo) / (hi - lo);
  } else {
    out.voxels.setZero();
  }
  return out;
}

// Degradation -----------------------------------------------------------------

HsiCube crop(const HsiCube& cube, Index y0, Index x0, Index h, Index w) {
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > cube.height || x0 + w > cube.width) {
    throw ShapeError("crop window outside the cube");
  }
  HsiCube out(cube.bands, h, w);
  for (Index k = 0; k < cube.bands; ++k) out.band(k) = cube.band(k).block(y0, x0, h, w);
  out.wavelengths = cube.wavelengths;
  return out;
}

HsiCube degrade(const HsiCube& hr, Index scale) {
  if (scale < 1) throw ShapeError("degrade: scale must be >= 1");
  const Index h = hr.height / scale * scale, w = hr.width / scale * scale;
  if (h < scale || w < scale) throw ShapeError("degrade: cube smaller than the scale factor");
  const HsiCube cropped = (h == hr.height && w == hr.width) ? hr : crop(hr, 0, 0, h, w);
  HsiCube out = HsiCube::from_tensor(resize(ResampleKind::bicubic, cropped.to_tensor(), h / scale, w / scale));
  out.wavelengths = hr.wavelengths;
  return out;
}

std::vector<PatchPair> extract_patches(const HsiCube& cube, Index count, Index patch, Index scale, Rng& rng,
                                       const std::string& source) {
  const Index size = patch * scale;
  if (patch < 1 || scale < 1) throw ShapeError("patch size and scale must be >= 1");
  if (cube.height < size || cube.width < size) {
    throw ShapeError("cube " + to_string(cube.shape()) + " is smaller than one " + std::to_string(size) +
                     "x" + std::to_string(size) + " patch");
  }
  std::vector<PatchPair> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    PatchPair pair;
    pair.offset_y = rng.below(cube.height - size + 1);
    pair.offset_x = rng.below(cube.width - size + 1);
    pair.hr = crop(cube, pair.offset_y, pair.offset_x, size, size);
    pair.lr = degrade(pair.hr, scale);
    pair.source = source;
    out.push_back(std::move(pair));
  }
  return out;
}

// Augmentation ----------------------------------------------------------------

HsiCube rotate90(const HsiCube& cube, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return cube;
  const bool swap = q % 2 == 1;
  HsiCube out(cube.bands, swap ? cube.width : cube.height, swap ? cube.height : cube.width);
  out.wavelengths = cube.wavelengths;
  const Index h = cube.height, w = cube.width;
  for (Index k = 0; k < cube.bands; ++k)
    for (Index y = 0; y < out.height; ++y)
      for (Index x = 0; x < out.width; ++x) {
        // Counter-clockwise turns.
        switch (q) {
          case 1: out(k, y, x) = cube(k, x, w - 1 - y); break;
          case 2: out(k, y, x) = cube(k, h - 1 - y, w - 1 - x); break;
          default: out(k, y, x) = cube(k, h - 1 - x, y); break;
        }
      }
  return out;
}

HsiCube hflip(const HsiCube& cube) {
  HsiCube out = cube;
  for (Index k = 0; k < cube.bands; ++k) out.band(k) = cube.band(k).rowwise().reverse();
  return out;
}

std::string to_string(const Augmentation& a) {
  static constexpr const char* names[] = {"none", "rot90", "rot180", "rot270", "hflip"};
  std::ostringstream os;
  os << names[static_cast<int>(a.geometric)] << "@" << a.zoom;
  return os.str();
}

PatchPair augment(const PatchPair& pair, const Augmentation& a, Index scale) {
  auto geometric = [&](const HsiCube& c) {
    switch (a.geometric) {
      case Geometric::none: return c;
      case Geometric::rot90: return rotate90(c, 1);
      case Geometric::rot180: return rotate90(c, 2);
      case Geometric::rot270: return rotate90(c, 3);
      case Geometric::hflip: return hflip(c);
    }
    return c;
  };
  PatchPair out = pair;
  out.hr = geometric(pair.hr);
  out.lr = geometric(pair.lr);
  if (a.zoom != 1.0) {
    if (!(a.zoom > 0)) throw ShapeError("zoom must be positive");
    const auto zh = static_cast<Index>(std::lround(a.zoom * static_cast<double>(out.hr.height)));
    const auto zw = static_cast<Index>(std::lround(a.zoom * static_cast<double>(out.hr.width)));
    const Index h = zh / scale * scale, w = zw / scale * scale;
    if (h < scale || w < scale) throw ShapeError("zoom leaves a patch smaller than the scale factor");
    HsiCube zoomed = HsiCube::from_tensor(resize(ResampleKind::bicubic, out.hr.to_tensor(), zh, zw));
    zoomed.wavelengths = out.hr.wavelengths;
    out.hr = crop(zoomed, 0, 0, h, w);
    out.lr = degrade(out.hr, scale);
  }
  out.augmentation = to_string(a);
  return out;
}

Augmentation random_augmentation(Rng& rng) {
  static constexpr double zooms[] = {1.0, 0.75, 0.5};
  Augmentation a;
  a.geometric = static_cast<Geometric>(rng.below(5));
  a.zoom = zooms[rng.below(3)];
  return a;
}

// Manifest --------------------------------------------------------------------

std::vector<std::filesystem::path> DatasetManifest::paths(Split split) const {
  std::vector<std::filesystem::path> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e.path);
  return out;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

DatasetManifest make_manifest(std::vector<std::filesystem::path> paths, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = paths.size(); i > 1; --i) {
    std::swap(paths[i - 1], paths[static_cast<std::size_t>(rng.below(static_cast<Index>(i)))]);
  }
  const std::size_t n_val = paths.size() / 10, n_test = paths.size() / 10;
  DatasetManifest m;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Split s = i < n_val ? Split::val : (i < n_val + n_test ? Split::test : Split::train);
    m.entries.push_back({paths[i], s});
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& e : m.entries) f << e.path.generic_string() << '\t' << to_string(e.split) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  Index lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DecodeError(path.string() + ":" + std::to_string(lineno) + ": expected 'path<TAB>split'");
    }
    std::filesystem::path p = line.substr(0, tab);
    if (p.is_relative()) p = path.parent_path() / p;
    m.entries.push_back({p, parse_split(line.substr(tab + 1))});
  }
  return m;
}

}  // namespace srdnet
