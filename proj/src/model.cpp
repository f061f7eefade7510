#include "srdnet/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace srdnet {

// Configuration ---------------------------------------------------------------

Ablation ablate(std::vector<std::string> names) {
  Ablation a;
  for (const std::string& n : names) {
    if (n == "pam") {
      a.use_pam = false;
    } else if (n == "2d") {
      a.use_2d = false;
    } else if (n == "3d") {
      a.use_3d = false;
    } else if (n == "igm") {
      a.use_igm = false;
    } else if (n == "hsl") {
      a.use_hsl = false;
    } else if (!n.empty()) {
      throw ConfigError("unknown ablation component '" + n + "' (expected pam, 2d, 3d, igm, hsl)");
    }
  }
  if (!a.use_pam) a.use_2d = a.use_3d = false;
  if (!a.use_2d) a.use_igm = a.use_hsl = false;
  if (a.use_pam && !a.use_2d && !a.use_3d) {
    throw ConfigError("ablating both branches leaves PAM empty; ablate 'pam' for the baseline");
  }
  return a;
}

std::pair<Index, Index> balanced_split(Index scale) {
  if (scale < 1) throw ConfigError("scale must be >= 1");
  Index a = 1;
  for (Index d = 1; d * d <= scale; ++d)
    if (scale % d == 0) a = d;
  return {a, scale / a};
}

ModelConfig ModelConfig::make(Index bands, Index scale) {
  ModelConfig cfg;
  cfg.bands = bands;
  cfg.scale = scale;
  std::tie(cfg.local_scale, cfg.global_scale) = balanced_split(scale);
  return cfg;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (bands < 1) fail("bands must be >= 1");
  if (scale != 2 && scale != 3 && scale != 4 && scale != 8) fail("scale must be one of 2, 3, 4, 8");
  if (local_scale < 1 || global_scale < 1 || local_scale * global_scale != scale) {
    fail("local_scale * global_scale must equal scale");
  }
  if (n_units < 1) fail("n_units must be >= 1");
  if (c_feat < 1 || c_3d < 1 || igm_width < 1) fail("channel counts must be positive");
  const Ablation& a = ablation;
  if ((a.use_2d || a.use_3d) && !a.use_pam) fail("a PAM branch is enabled without PAM");
  if (a.use_pam && !a.use_2d && !a.use_3d) fail("PAM is enabled with no branch");
  if ((a.use_igm || a.use_hsl) && !a.use_2d) fail("IGM/HSL are enabled without the 2D branch");
  if (a.use_hsl && c_feat % 2 != 0) fail("HSL needs an even c_feat");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"bands", cfg.bands},
          {"scale", cfg.scale},
          {"n_units", cfg.n_units},
          {"c_feat", cfg.c_feat},
          {"c_3d", cfg.c_3d},
          {"igm_width", cfg.igm_width},
          {"local_scale", cfg.local_scale},
          {"global_scale", cfg.global_scale},
          {"ablation",
           {{"pam", cfg.ablation.use_pam},
            {"2d", cfg.ablation.use_2d},
            {"3d", cfg.ablation.use_3d},
            {"igm", cfg.ablation.use_igm},
            {"hsl", cfg.ablation.use_hsl}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    cfg.bands = j.at("bands").get<Index>();
    cfg.scale = j.at("scale").get<Index>();
    cfg.n_units = j.at("n_units").get<Index>();
    cfg.c_feat = j.at("c_feat").get<Index>();
    cfg.c_3d = j.at("c_3d").get<Index>();
    cfg.igm_width = j.at("igm_width").get<Index>();
    cfg.local_scale = j.at("local_scale").get<Index>();
    cfg.global_scale = j.at("global_scale").get<Index>();
    const auto& a = j.at("ablation");
    cfg.ablation = {a.at("pam").get<bool>(), a.at("2d").get<bool>(), a.at("3d").get<bool>(),
                    a.at("igm").get<bool>(), a.at("hsl").get<bool>()};
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config JSON: ") + e.what());
  }
}

// Parameters ------------------------------------------------------------------

namespace {

template <typename Conv, typename Fn>
void visit_conv(const std::string& name, Conv& layer, Fn& fn) {
  fn(name + ".weight", layer.weight);
  fn(name + ".bias", layer.bias);
}

template <typename Params, typename Fn>
void visit_all(Params& p, Fn fn) {
  visit_conv("head", p.head, fn);
  visit_conv("res1.first", p.res1.first, fn);
  visit_conv("res1.second", p.res1.second, fn);
  visit_conv("local_proj", p.local_proj, fn);
  auto& pam = p.pam;
  if (pam.igm) {
    visit_conv("pam.igm.entry", pam.igm->entry, fn);
    const std::pair<const char*, decltype(&pam.igm->sgb_a)> subnets[] = {
        {"sgb_a", &pam.igm->sgb_a}, {"sgb_b", &pam.igm->sgb_b}, {"cb", &pam.igm->cb}};
    for (const auto& [label, net] : subnets)
      for (std::size_t i = 0; i < net->size(); ++i) {
        visit_conv("pam.igm." + std::string(label) + "." + std::to_string(i), (*net)[i], fn);
      }
    visit_conv("pam.igm.fuse", pam.igm->fuse, fn);
  }
  if (pam.hsl) {
    visit_conv("pam.hsl.query", pam.hsl->query, fn);
    visit_conv("pam.hsl.key", pam.hsl->key, fn);
    visit_conv("pam.hsl.value", pam.hsl->value, fn);
    visit_conv("pam.hsl.fusion", pam.hsl->fusion, fn);
    visit_conv("pam.hsl.down1", pam.hsl->down1, fn);
    visit_conv("pam.hsl.down2", pam.hsl->down2, fn);
  }
  if (pam.post2d) visit_conv("pam.post2d", *pam.post2d, fn);
  if (pam.unit3d) {
    visit_conv("pam.unit3d.entry", pam.unit3d->entry, fn);
    for (std::size_t i = 0; i < pam.unit3d->units.size(); ++i) {
      visit_conv("pam.unit3d.units." + std::to_string(i) + ".spatial", pam.unit3d->units[i].spatial, fn);
      visit_conv("pam.unit3d.units." + std::to_string(i) + ".spectral", pam.unit3d->units[i].spectral, fn);
    }
    visit_conv("pam.unit3d.fuse", pam.unit3d->fuse, fn);
  }
  if (pam.feedback) visit_conv("pam.feedback", *pam.feedback, fn);
  visit_conv("res2.first", p.res2.first, fn);
  visit_conv("res2.second", p.res2.second, fn);
  visit_conv("global_up", p.global_up, fn);
  visit_conv("tail", p.tail, fn);
}

}  // namespace

void ModelParameters::visit(const Visitor& fn) {
  visit_all(*this, [&](const std::string& name, Tensor& t) { fn(name, t); });
}

std::vector<std::pair<std::string, Tensor>> ModelParameters::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  visit_all(*this, [&](const std::string& name, const Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::vector<Tensor> ModelParameters::tensors() const {
  std::vector<Tensor> out;
  visit_all(*this, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

void ModelParameters::assign(std::span<const Tensor> values) {
  std::size_t i = 0;
  visit([&](const std::string& name, Tensor& t) {
    if (i >= values.size()) throw ShapeError("assign: too few tensors");
    if (values[i].shape() != t.shape()) {
      throw ShapeError("assign: " + name + " expects " + to_string(t.shape()) + ", got " +
                       to_string(values[i].shape()));
    }
    t = values[i++];
  });
  if (i != values.size()) throw ShapeError("assign: too many tensors");
}

ModelParameters init_parameters(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index c = cfg.c_feat;
  const Ablation& a = cfg.ablation;
  ModelParameters p;
  p.head = make_conv2d(cfg.bands, c, 3, rng);
  p.res1 = {make_conv2d(c, c, 3, rng), make_conv2d(c, c, 3, rng)};
  p.local_proj = make_conv2d(c, c, 1, rng);
  if (a.use_igm) p.pam.igm = make_igm(c, cfg.igm_width, rng);
  if (a.use_hsl) p.pam.hsl = make_hsl(c, rng);
  if (a.use_2d) p.pam.post2d = make_conv2d(c, c, 3, rng);
  if (a.use_3d) p.pam.unit3d = make_unit3d(cfg.c_3d, cfg.n_units, rng);
  if (a.use_3d && a.use_hsl) p.pam.feedback = make_conv2d(c, c, 1, rng);
  p.res2 = {make_conv2d(c, c, 3, rng), make_conv2d(c, c, 3, rng)};
  p.global_up = make_transposed_conv2d(c, c, cfg.global_scale, rng);
  p.tail = make_conv2d(c, cfg.bands, 3, rng);
  return p;
}

Index count_parameters(const ModelParameters& params) {
  Index n = 0;
  for (const Tensor& t : params.tensors()) n += t.size();
  return n;
}

ModelParameters zeroed(const ModelParameters& params) {
  ModelParameters out = params;
  out.visit([](const std::string&, Tensor& t) { t = zeros(t.shape(), t.requires_grad()); });
  return out;
}

// Forward ---------------------------------------------------------------------

Tensor residual_block(const Tensor& x, const ResidualBlock& block) {
  return conv2d(relu(conv2d(x, block.first)), block.second) + x;
}

Tensor forward(const Tensor& lr, const ModelConfig& cfg, const ModelParameters& params) {
  if (lr.rank() != 3) throw ShapeError("forward expects [B, h, w], got " + to_string(lr.shape()));
  if (lr.dim(0) != cfg.bands) {
    throw ShapeError("input has " + std::to_string(lr.dim(0)) + " bands, model expects " +
                     std::to_string(cfg.bands));
  }
  if (lr.dim(1) < kMinInputSide || lr.dim(2) < kMinInputSide) {
    throw ShapeError("input " + to_string(lr.shape()) + " is too small for the attention pyramid (need >= 8x8)");
  }
  const Index rl = cfg.local_scale;
  const Index h = lr.dim(1), w = lr.dim(2);

  const Tensor x0 = residual_block(conv2d(lr, params.head), params.res1);
  const Tensor skip = resize(ResampleKind::bicubic, conv2d(x0, params.local_proj), rl * h, rl * w);
  const Tensor deep = cfg.ablation.use_pam ? pam_forward(x0, params.pam, rl) + skip : skip;
  const Tensor xt = residual_block(deep, params.res2);
  const Tensor rec = conv2d(transposed_conv2d(xt, params.global_up), params.tail);
  return rec + resize(ResampleKind::bicubic, lr, cfg.scale * h, cfg.scale * w);
}

HsiCube super_resolve(const HsiCube& lr, const ModelConfig& cfg, const ModelParameters& params) {
  HsiCube out = HsiCube::from_tensor(forward(lr.to_tensor(), cfg, params));
  out.wavelengths = lr.wavelengths;
  return out;
}

// Checkpoints -------------------------------------------------------------------

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::string text(std::uint64_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }
  void need(std::uint64_t n) const {
    if (bytes_.size() - pos_ < n) throw DecodeError("checkpoint truncated");
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  for (char c : {'S', 'R', 'D', 'N'}) out.push_back(static_cast<std::uint8_t>(c));
  out.push_back(static_cast<std::uint8_t>(kCheckpointVersion & 0xff));
  out.push_back(static_cast<std::uint8_t>(kCheckpointVersion >> 8));
  const std::string meta = ckpt.meta.dump();
  put_u64(out, meta.size());
  out.insert(out.end(), meta.begin(), meta.end());
  put_u64(out, ckpt.tensors.size());
  for (const NamedTensor& t : ckpt.tensors) {
    if (element_count(t.shape) != t.values.size()) throw ShapeError("checkpoint tensor " + t.name + " is inconsistent");
    put_u64(out, t.name.size());
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u64(out, t.shape.size());
    for (Index d : t.shape) put_u64(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.values.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(t.values[i]));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (in.text(4) != "SRDN") throw DecodeError("bad magic: not an SRDN checkpoint");
  const std::uint16_t version = in.u16();
  if (version != kCheckpointVersion) throw DecodeError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(in.text(in.u64()));
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError(std::string("checkpoint metadata: ") + e.what());
  }
  const std::uint64_t count = in.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.text(in.u64());
    const std::uint64_t rank = in.u64();
    if (rank > 8) throw DecodeError("checkpoint tensor " + t.name + " has implausible rank");
    std::uint64_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = in.u64();
      if (dim == 0 || dim > in.remaining() / 8 || n > in.remaining() / 8 / dim) {
        throw DecodeError("checkpoint tensor " + t.name + " dimensions exceed the payload");
      }
      n *= dim;
      t.shape.push_back(static_cast<Index>(dim));
    }
    in.need(8 * n);
    t.values.resize(static_cast<Index>(n));
    for (Index k = 0; k < t.values.size(); ++k) t.values[k] = std::bit_cast<double>(in.u64());
    ckpt.tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0) throw DecodeError("trailing bytes after checkpoint payload");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const ModelConfig& cfg, const ModelParameters& params) {
  Checkpoint ckpt;
  ckpt.meta["model"] = to_json(cfg);
  for (const auto& [name, t] : params.named()) ckpt.tensors.push_back({name, t.shape(), t.values()});
  return ckpt;
}

std::pair<ModelConfig, ModelParameters> load_model(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model")) throw DecodeError("checkpoint has no model config");
  const ModelConfig cfg = model_config_from_json(ckpt.meta.at("model"));
  Rng rng(0);
  ModelParameters params = init_parameters(cfg, rng);
  params.visit([&](const std::string& name, Tensor& t) {
    const NamedTensor* stored = ckpt.find(name);
    if (!stored) throw DecodeError("checkpoint is missing tensor " + name);
    if (stored->shape != t.shape()) {
      throw DecodeError("checkpoint tensor " + name + " has shape " + to_string(stored->shape) + ", expected " +
                        to_string(t.shape()));
    }
    t = Tensor(stored->shape, stored->values, true);
  });
  return {cfg, std::move(params)};
}

}  // namespace srdnet
