#include "kgcicam/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace kgcicam {

namespace {

constexpr std::uint32_t kMagic = 0x4b474350;  // "KGCP"

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_ints(std::ostream& os, const std::vector<int>& v) {
  put_u32(os, static_cast<std::uint32_t>(v.size()));
  for (int x : v) put_u32(os, static_cast<std::uint32_t>(x));
}

void put_tensor(std::ostream& os, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  for (long i = 0; i < t.numel(); ++i) put_f64(os, t[i]);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IngestionError("checkpoint: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IngestionError("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string get_str(std::istream& is) {
  std::uint32_t n = get_u32(is);
  if (n > (1u << 26)) throw IngestionError("checkpoint: unreasonable string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IngestionError("checkpoint: truncated");
  return s;
}

std::vector<int> get_ints(std::istream& is) {
  std::uint32_t n = get_u32(is);
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(get_u32(is));
  return v;
}

Tensor get_tensor(std::istream& is) {
  int rank = static_cast<int>(get_u32(is));
  if (rank < 0 || rank > 4) throw IngestionError("checkpoint: bad tensor rank");
  std::vector<int> shape(static_cast<size_t>(rank));
  for (auto& d : shape) d = static_cast<int>(get_u32(is));
  Tensor t(shape);
  for (long i = 0; i < t.numel(); ++i) t[i] = get_f64(is);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestionError("cannot write checkpoint: " + path);
  put_u32(os, kMagic);
  put_u32(os, static_cast<std::uint32_t>(ckpt.format_version));
  put_str(os, ckpt.role);
  put_str(os, ckpt.config_text);
  put_u32(os, static_cast<std::uint32_t>(ckpt.backbone.in_h));
  put_u32(os, static_cast<std::uint32_t>(ckpt.backbone.in_w));
  put_ints(os, ckpt.backbone.stage_channels);
  put_ints(os, ckpt.backbone.stage_strides);
  put_ints(os, ckpt.backbone.nonlocal_after);
  put_u32(os, static_cast<std::uint32_t>(ckpt.n_classes));
  put_u32(os, ckpt.use_causal ? 1u : 0u);
  put_str(os, ckpt.settings.gamma_curve);
  put_f64(os, ckpt.settings.box_threshold);

  put_u32(os, static_cast<std::uint32_t>(ckpt.params.count()));
  for (int i = 0; i < ckpt.params.count(); ++i) {
    put_str(os, ckpt.params.name(i));
    put_tensor(os, ckpt.params.value(i));
  }

  // pool tagged with its own hyperparameters and shape
  put_f64(os, ckpt.pool.update_rate);
  put_f64(os, ckpt.pool.epsilon);
  put_tensor(os, ckpt.pool.q);

  put_u32(os, static_cast<std::uint32_t>(ckpt.selection_metrics.size()));
  for (const auto& [k, v] : ckpt.selection_metrics) {
    put_str(os, k);
    put_f64(os, v);
  }
  if (!os) throw IngestionError("write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot read checkpoint: " + path);
  if (get_u32(is) != kMagic) throw IngestionError("not a checkpoint file: " + path);
  Checkpoint ckpt;
  ckpt.format_version = static_cast<int>(get_u32(is));
  if (ckpt.format_version != 1)
    throw IngestionError("unsupported checkpoint version in " + path);
  ckpt.role = get_str(is);
  ckpt.config_text = get_str(is);
  ckpt.backbone.in_h = static_cast<int>(get_u32(is));
  ckpt.backbone.in_w = static_cast<int>(get_u32(is));
  ckpt.backbone.stage_channels = get_ints(is);
  ckpt.backbone.stage_strides = get_ints(is);
  ckpt.backbone.nonlocal_after = get_ints(is);
  ckpt.n_classes = static_cast<int>(get_u32(is));
  ckpt.use_causal = get_u32(is) != 0;
  ckpt.settings.gamma_curve = get_str(is);
  ckpt.settings.box_threshold = get_f64(is);

  std::uint32_t n_params = get_u32(is);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = get_str(is);
    ckpt.params.add(name, get_tensor(is));
  }

  ckpt.pool.update_rate = get_f64(is);
  ckpt.pool.epsilon = get_f64(is);
  ckpt.pool.q = get_tensor(is);
  if (ckpt.pool.q.rank() != 3)
    throw IngestionError("checkpoint pool must be rank 3 in " + path);
  if (ckpt.pool.q.dim(0) != ckpt.n_classes)
    throw IngestionError("checkpoint pool class count mismatch in " + path);

  std::uint32_t n_metrics = get_u32(is);
  for (std::uint32_t i = 0; i < n_metrics; ++i) {
    std::string k = get_str(is);
    ckpt.selection_metrics[k] = get_f64(is);
  }
  return ckpt;
}

Checkpoint checkpoint_from_model(const CiCamModel& model, const std::string& role,
                                 const std::string& config_text,
                                 const std::map<std::string, double>& metrics) {
  Checkpoint ckpt;
  ckpt.role = role;
  ckpt.config_text = config_text;
  ckpt.backbone = model.backbone();
  ckpt.n_classes = model.n_classes();
  ckpt.use_causal = model.use_causal();
  ckpt.settings = model.settings();
  ckpt.params = model.params();
  ckpt.pool = model.pool();
  ckpt.selection_metrics = metrics;
  return ckpt;
}

CiCamModel model_from_checkpoint(const Checkpoint& ckpt) {
  CiCamModel model(ckpt.backbone, ckpt.n_classes, ckpt.pool.update_rate,
                   ckpt.pool.epsilon, ckpt.settings, /*seed=*/1, ckpt.use_causal);
  if (model.params().count() != ckpt.params.count())
    throw IngestionError("checkpoint parameter set does not match the model");
  for (int i = 0; i < ckpt.params.count(); ++i) {
    const std::string& name = ckpt.params.name(i);
    Tensor& dst = model.params().value(name);
    const Tensor& src = ckpt.params.value(i);
    if (dst.shape() != src.shape())
      throw IngestionError("checkpoint parameter shape mismatch: " + name);
    dst = src;
  }
  model.pool() = ckpt.pool;
  return model;
}

unsigned long long file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot hash file: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!is) break;
  }
  return h;
}

}  // namespace kgcicam
