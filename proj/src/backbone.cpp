#include "kgcicam/backbone.hpp"

#include <cmath>

namespace kgcicam {

void BackboneConfig::validate() const {
  if (stage_channels.empty() || stage_channels.size() != stage_strides.size())
    throw ConfigError("backbone: stage_channels/stage_strides length mismatch");
  int f = downsample_factor();
  if (in_h % f != 0 || in_w % f != 0)
    throw ConfigError("backbone: input size not divisible by downsample factor");
  for (int p : nonlocal_after)
    if (p < 0 || p >= static_cast<int>(stage_channels.size()))
      throw ConfigError("backbone: nonlocal position out of range");
}

namespace {

int mid_channels(int c) { return c >= 2 ? c / 2 : 1; }

std::string stage_prefix(int i) { return "backbone.stage" + std::to_string(i); }
std::string nl_prefix(int i) { return "backbone.nl" + std::to_string(i); }

bool has_nonlocal(const BackboneConfig& cfg, int stage) {
  for (int p : cfg.nonlocal_after)
    if (p == stage) return true;
  return false;
}

}  // namespace

void init_backbone_params(const BackboneConfig& cfg, ParamStore& store,
                          std::mt19937_64& rng) {
  cfg.validate();
  int in_c = 3;
  for (size_t i = 0; i < cfg.stage_channels.size(); ++i) {
    int out_c = cfg.stage_channels[i];
    double stddev = std::sqrt(2.0 / (in_c * 9));
    store.add(stage_prefix(static_cast<int>(i)) + ".w",
              randn({out_c, in_c, 3, 3}, stddev, rng));
    store.add(stage_prefix(static_cast<int>(i)) + ".b", Tensor({out_c}));
    if (has_nonlocal(cfg, static_cast<int>(i))) {
      int c = out_c, cm = mid_channels(out_c);
      double s1 = std::sqrt(2.0 / c);
      std::string p = nl_prefix(static_cast<int>(i));
      store.add(p + ".theta_w", randn({cm, c, 1, 1}, s1, rng));
      store.add(p + ".theta_b", Tensor({cm}));
      store.add(p + ".phi_w", randn({cm, c, 1, 1}, s1, rng));
      store.add(p + ".phi_b", Tensor({cm}));
      store.add(p + ".g_w", randn({cm, c, 1, 1}, s1, rng));
      store.add(p + ".g_b", Tensor({cm}));
      // zero-initialized: the block starts as the identity
      store.add(p + ".out_w", Tensor({c, cm, 1, 1}));
      store.add(p + ".out_b", Tensor({c}));
    }
    in_c = out_c;
  }
}

Graph::Id nonlocal_block(Graph& g, Graph::Id x, const std::string& prefix,
                         BoundParams& params, Tensor* attention_out) {
  const Tensor& tx = g.val(x);
  if (tx.rank() != 3) throw DimensionError("nonlocal_block: expected [c,h,w]");
  int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  int cm = g.val(params(prefix + ".theta_w")).dim(0);
  int N = h * w;

  auto theta = g.conv2d(x, params(prefix + ".theta_w"), params(prefix + ".theta_b"), 1, 0);
  auto phi = g.conv2d(x, params(prefix + ".phi_w"), params(prefix + ".phi_b"), 1, 0);
  auto gee = g.conv2d(x, params(prefix + ".g_w"), params(prefix + ".g_b"), 1, 0);

  auto theta_f = g.reshape(theta, {cm, N});
  auto phi_f = g.reshape(phi, {cm, N});
  auto g_f = g.reshape(gee, {cm, N});

  auto scores = g.matmul_tn(theta_f, phi_f);   // [N,N], row = query position
  auto attn = g.softmax_rows(scores);
  if (attention_out) *attention_out = g.val(attn);
  auto y_f = g.matmul_nt(g_f, attn);           // y[:,i] = sum_j attn[i,j] g[:,j]
  auto y = g.reshape(y_f, {cm, h, w});
  auto z = g.conv2d(y, params(prefix + ".out_w"), params(prefix + ".out_b"), 1, 0);
  (void)c;
  return g.add(x, z);
}

Graph::Id backbone_forward(Graph& g, const BackboneConfig& cfg, Graph::Id image,
                           BoundParams& params) {
  const Tensor& ti = g.val(image);
  if (ti.rank() != 3 || ti.dim(0) != 3 || ti.dim(1) != cfg.in_h || ti.dim(2) != cfg.in_w)
    throw DimensionError("backbone_forward: image shape mismatch, got " +
                         shape_str(ti.shape()));
  Graph::Id x = image;
  for (size_t i = 0; i < cfg.stage_channels.size(); ++i) {
    std::string p = stage_prefix(static_cast<int>(i));
    x = g.conv2d(x, params(p + ".w"), params(p + ".b"), cfg.stage_strides[i], 1);
    x = g.relu(x);
    if (has_nonlocal(cfg, static_cast<int>(i)))
      x = nonlocal_block(g, x, nl_prefix(static_cast<int>(i)), params);
  }
  return x;
}

Tensor extract_features(const BackboneConfig& cfg, const ParamStore& store,
                        const Tensor& image) {
  Graph g;
  BoundParams params(g, store, /*train=*/false);
  Graph::Id img = g.constant(image);
  Graph::Id feat = backbone_forward(g, cfg, img, params);
  return g.val(feat);
}

}  // namespace kgcicam
