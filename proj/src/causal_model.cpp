#include "kgcicam/causal_model.hpp"

#include <cmath>

namespace kgcicam {

Tensor spatial_bn(const Tensor& map, double epsilon) {
  long N = map.numel();
  double mean = 0.0;
  for (long i = 0; i < N; ++i) mean += map[i];
  mean /= static_cast<double>(N);
  double var = 0.0;
  for (long i = 0; i < N; ++i) {
    double d = map[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(N);
  double inv = 1.0 / std::sqrt(var + epsilon);
  Tensor out(map.shape());
  for (long i = 0; i < N; ++i) out[i] = (map[i] - mean) * inv;
  return out;
}

int argmax_index(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(best)]) best = i;
  return best;
}

int update_pool(CausalContextPool& pool, const Tensor& maps,
                const std::vector<double>& scores) {
  if (maps.rank() != 3 || !maps.same_shape(pool.q))
    throw DimensionError("update_pool: maps shape does not match pool");
  if (static_cast<int>(scores.size()) != pool.n_classes())
    throw DimensionError("update_pool: score length mismatch");
  int pi = argmax_index(scores);
  int h = pool.q.dim(1), w = pool.q.dim(2);
  int N = h * w;
  Tensor m_row({h, w});
  for (int i = 0; i < N; ++i) m_row[i] = maps.data()[static_cast<long>(pi) * N + i];
  Tensor m_bn = spatial_bn(m_row, pool.epsilon);
  Tensor q_row({h, w});
  double* qp = pool.q.data() + static_cast<long>(pi) * N;
  for (int i = 0; i < N; ++i) q_row[i] = qp[i] + pool.update_rate * m_bn[i];
  Tensor q_new = spatial_bn(q_row, pool.epsilon);
  for (int i = 0; i < N; ++i) qp[i] = q_new[i];
  return pi;
}

CiCamModel::CiCamModel(const BackboneConfig& backbone, int n_classes, double lambda,
                       double epsilon, const CiCamSettings& settings,
                       unsigned long long seed, bool use_causal)
    : backbone_(backbone),
      n_classes_(n_classes),
      settings_(settings),
      use_causal_(use_causal),
      pool_(n_classes, backbone.out_h(), backbone.out_w(), lambda, epsilon) {
  if (n_classes < 1) throw ConfigError("CiCamModel: need at least one class");
  std::mt19937_64 rng(seed);
  init_backbone_params(backbone_, params_, rng);
  int d = backbone_.out_channels();
  params_.add("head.w", randn({n_classes, d}, 0.01, rng));
  params_.add("head.b", Tensor({n_classes}));
  // zero-initialized so enhancement starts as the identity
  params_.add("enhance.w", Tensor({d, 1, 1, 1}));
  params_.add("enhance.b", Tensor({d}));
}

namespace {
std::vector<double> softmax_vals(const Tensor& z) {
  int n = z.dim(0);
  double mx = z[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  std::vector<double> p(static_cast<size_t>(n));
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] = std::exp(z[i] - mx);
    s += p[static_cast<size_t>(i)];
  }
  for (auto& x : p) x /= s;
  return p;
}
}  // namespace

CiCamOutput CiCamModel::forward(Graph& g, BoundParams& params, const Tensor& image,
                                bool train) {
  if (pool_.n_classes() != n_classes_)
    throw ConfigError("CiCamModel: pool/head class count mismatch");
  CiCamOutput out;
  Graph::Id img = g.constant(image);
  out.features = backbone_forward(g, backbone_, img, params);

  auto head_w = params("head.w");
  auto head_b = params("head.b");
  auto pooled = g.gap(out.features);
  out.logits1 = g.linear(pooled, head_w, head_b);
  out.maps1 = g.channel_mix(out.features, head_w);
  out.s1 = softmax_vals(g.val(out.logits1));
  out.top_class = argmax_index(out.s1);

  if (use_causal_) {
    if (train) update_pool(pool_, g.val(out.maps1), out.s1);
    int h = backbone_.out_h(), w = backbone_.out_w();
    int N = h * w;
    Tensor q_row({1, h, w});
    const double* qp = pool_.q.data() + static_cast<long>(out.top_class) * N;
    for (int i = 0; i < N; ++i) q_row[i] = qp[i];
    auto q_node = g.constant(std::move(q_row));
    auto proj = g.conv2d(q_node, params("enhance.w"), params("enhance.b"), 1, 0);
    auto enhanced = g.add(out.features, g.mul(out.features, proj));
    auto pooled2 = g.gap(enhanced);
    out.logits2 = g.linear(pooled2, head_w, head_b);
    out.maps2 = g.channel_mix(enhanced, head_w);
  } else {
    out.logits2 = out.logits1;
    out.maps2 = out.maps1;
  }
  out.s2 = softmax_vals(g.val(out.logits2));

  cam::GammaCurve gamma = cam::GammaCurve::by_name(settings_.gamma_curve, n_classes_);
  Tensor h_raw = cam::combinational_map(g.val(out.maps2), out.s2, gamma);
  out.h_map = cam::normalize_map(h_raw);
  out.box = cam::extract_box(out.h_map, settings_.box_threshold);
  out.loc_map = -1;
  return out;
}

CiCamOutput CiCamModel::forward_image(Graph& g, const Tensor& image, bool train) {
  BoundParams params(g, params_, train);
  return forward(g, params, image, train);
}

Graph::Id CiCamModel::loc_map_node(Graph& g, const CiCamOutput& out) const {
  cam::GammaCurve gamma = cam::GammaCurve::by_name(settings_.gamma_curve, n_classes_);
  auto weights = cam::gamma_by_class(out.s2, gamma);
  auto h_raw = g.weighted_map_sum(out.maps2, weights);
  return g.normalize_minmax(h_raw);
}

Graph::Id causal_loss(Graph& g, Graph::Id logits1, Graph::Id logits2, int label,
                      double rho) {
  auto ce2 = g.cross_entropy(logits2, label);
  if (rho == 0.0) return ce2;
  auto ce1 = g.cross_entropy(logits1, label);
  return g.weighted_sum_scalars({ce1, ce2}, {rho, 1.0});
}

}  // namespace kgcicam
