#include "kgcicam/guidance.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

namespace kgcicam {

std::vector<double> soften(const std::vector<double>& z, double temperature) {
  if (temperature <= 0.0) throw ConfigError("soften: temperature must be > 0");
  size_t n = z.size();
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> p(n);
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p[i] = std::exp((z[i] - mx) / temperature);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

Graph::Id logits_guidance_loss(Graph& g, Graph::Id student_logits,
                               const Tensor& teacher_logits, double temperature,
                               bool reverse_kl) {
  std::vector<double> zt(teacher_logits.data(),
                         teacher_logits.data() + teacher_logits.numel());
  std::vector<double> q = soften(zt, temperature);
  Tensor qt(teacher_logits.shape(), std::move(q));
  return reverse_kl ? g.kl_from_const(student_logits, qt, temperature)
                    : g.kl_to_const(student_logits, qt, temperature);
}

Graph::Id activation_guidance_loss(Graph& g, Graph::Id student_maps,
                                   const Tensor& teacher_maps, double temperature) {
  const Tensor& sm = g.val(student_maps);
  if (!sm.same_shape(teacher_maps))
    throw DimensionError("activation_guidance_loss: map shape mismatch");
  int n = teacher_maps.dim(0);
  int N = teacher_maps.dim(1) * teacher_maps.dim(2);
  Tensor teacher_soft(teacher_maps.shape());
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(teacher_maps.data() + static_cast<long>(i) * N,
                            teacher_maps.data() + static_cast<long>(i + 1) * N);
    std::vector<double> p = soften(row, temperature);
    for (int j = 0; j < N; ++j) teacher_soft[static_cast<long>(i) * N + j] = p[static_cast<size_t>(j)];
  }
  auto student_soft = g.spatial_softmax(student_maps, temperature);
  return g.mse(student_soft, g.constant(std::move(teacher_soft)));
}

Graph::Id guidance_total_loss(Graph& g, const CiCamOutput& student,
                              const KnowledgeRecord& cls_record,
                              const KnowledgeRecord& loc_record, int label,
                              const GuidanceConfig& cfg) {
  cfg.validate();
  if (cls_record.source_role != ExpertRole::classification ||
      loc_record.source_role != ExpertRole::localization)
    throw ConfigError("guidance_total_loss: record role mismatch");
  auto l_cls = logits_guidance_loss(g, student.logits2, cls_record.teacher_logits,
                                    cfg.t_cls, cfg.reverse_kl);
  auto l_loc = activation_guidance_loss(g, student.maps2, loc_record.teacher_maps,
                                        cfg.t_loc);
  auto l_causal = causal_loss(g, student.logits1, student.logits2, label, 0.0);
  double c_cls = cfg.alpha * (cfg.t_squared_scaling ? cfg.t_cls * cfg.t_cls : 1.0);
  double c_loc = cfg.alpha * (cfg.t_squared_scaling ? cfg.t_loc * cfg.t_loc : 1.0);
  return g.weighted_sum_scalars({l_cls, l_loc, l_causal},
                                {c_cls, c_loc, 1.0 - cfg.alpha});
}

std::pair<KnowledgeRecord, KnowledgeRecord> run_teachers(CiCamModel& cls_expert,
                                                         CiCamModel& loc_expert,
                                                         const Tensor& image) {
  if (cls_expert.n_classes() != loc_expert.n_classes())
    throw ConfigError("run_teachers: expert class counts differ");
  KnowledgeRecord cls_rec, loc_rec;
  {
    Graph g;
    CiCamOutput out = cls_expert.forward_image(g, image, /*train=*/false);
    cls_rec.teacher_logits = g.val(out.logits2);
    cls_rec.teacher_maps = g.val(out.maps2);
    cls_rec.source_role = ExpertRole::classification;
  }
  {
    Graph g;
    CiCamOutput out = loc_expert.forward_image(g, image, /*train=*/false);
    loc_rec.teacher_logits = g.val(out.logits2);
    loc_rec.teacher_maps = g.val(out.maps2);
    loc_rec.source_role = ExpertRole::localization;
  }
  return {cls_rec, loc_rec};
}

namespace {

constexpr std::uint32_t kCacheMagic = 0x4b47434bu;  // "KGCK"

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_f32(std::ostream& os, const Tensor& t) {
  for (long i = 0; i < t.numel(); ++i) write_pod(os, static_cast<float>(t[i]));
}

void read_f32(std::istream& is, Tensor& t) {
  for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(read_pod<float>(is));
}

}  // namespace

void save_knowledge_cache(const std::string& path, const KnowledgeCache& cache) {
  if (cache.ids.size() != cache.cls_records.size() ||
      cache.ids.size() != cache.loc_records.size())
    throw ConfigError("knowledge cache: record count mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestionError("cannot write knowledge cache: " + path);
  write_pod(os, kCacheMagic);
  write_pod(os, cache.cls_hash);
  write_pod(os, cache.loc_hash);
  write_pod(os, static_cast<std::uint64_t>(cache.ids.size()));
  for (size_t i = 0; i < cache.ids.size(); ++i) {
    const auto& id = cache.ids[i];
    write_pod(os, static_cast<std::uint32_t>(id.size()));
    os.write(id.data(), static_cast<std::streamsize>(id.size()));
    const auto& cr = cache.cls_records[i];
    const auto& lr = cache.loc_records[i];
    write_pod(os, static_cast<std::int32_t>(cr.teacher_logits.dim(0)));
    write_pod(os, static_cast<std::int32_t>(lr.teacher_maps.dim(1)));
    write_pod(os, static_cast<std::int32_t>(lr.teacher_maps.dim(2)));
    write_f32(os, cr.teacher_logits);
    write_f32(os, lr.teacher_maps);
  }
}

KnowledgeCache load_knowledge_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot read knowledge cache: " + path);
  if (read_pod<std::uint32_t>(is) != kCacheMagic)
    throw IngestionError("knowledge cache: bad magic in " + path);
  KnowledgeCache cache;
  cache.cls_hash = read_pod<unsigned long long>(is);
  cache.loc_hash = read_pod<unsigned long long>(is);
  auto count = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto len = read_pod<std::uint32_t>(is);
    std::string id(len, '\0');
    is.read(id.data(), len);
    int n = read_pod<std::int32_t>(is);
    int h = read_pod<std::int32_t>(is);
    int w = read_pod<std::int32_t>(is);
    KnowledgeRecord cr, lr;
    cr.teacher_logits = Tensor({n});
    cr.source_role = ExpertRole::classification;
    lr.teacher_maps = Tensor({n, h, w});
    lr.source_role = ExpertRole::localization;
    read_f32(is, cr.teacher_logits);
    read_f32(is, lr.teacher_maps);
    if (!is) throw IngestionError("knowledge cache: truncated record in " + path);
    cache.ids.push_back(std::move(id));
    cache.cls_records.push_back(std::move(cr));
    cache.loc_records.push_back(std::move(lr));
  }
  return cache;
}

}  // namespace kgcicam
