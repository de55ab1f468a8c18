#include "kgcicam/experts.hpp"

namespace kgcicam {

std::string role_name(ExpertRole role) {
  return role == ExpertRole::classification ? "classification" : "localization";
}

ExpertRole role_from_name(const std::string& name) {
  if (name == "classification") return ExpertRole::classification;
  if (name == "localization") return ExpertRole::localization;
  throw ConfigError("unknown expert role: " + name);
}

MaskPair make_masks(const Tensor& loc_map, double threshold_fraction, int out_h,
                    int out_w) {
  if (loc_map.rank() != 2) throw DimensionError("make_masks: expected [h,w] map");
  double mx = loc_map[0];
  for (long i = 1; i < loc_map.numel(); ++i) mx = std::max(mx, loc_map[i]);
  double thr = threshold_fraction * mx;
  Tensor binary(loc_map.shape());
  for (long i = 0; i < loc_map.numel(); ++i) binary[i] = loc_map[i] > thr ? 1.0 : 0.0;
  MaskPair out;
  out.foreground = cam::upsample_nearest(binary, out_h, out_w);
  out.background = Tensor({out_h, out_w});
  for (long i = 0; i < out.background.numel(); ++i)
    out.background[i] = 1.0 - out.foreground[i];
  return out;
}

Tensor masked_image(const Tensor& image, const Tensor& mask) {
  if (image.rank() != 3 || mask.rank() != 2 || image.dim(1) != mask.dim(0) ||
      image.dim(2) != mask.dim(1))
    throw DimensionError("masked_image: shape mismatch");
  Tensor out(image.shape());
  long hw = mask.numel();
  for (int c = 0; c < image.dim(0); ++c) {
    const double* src = image.data() + c * hw;
    double* dst = out.data() + c * hw;
    for (long i = 0; i < hw; ++i) dst[i] = src[i] * mask[i];
  }
  return out;
}

Graph::Id area_loss(Graph& g, Graph::Id loc_map) { return g.mean_all(loc_map); }

Graph::Id fore_loss(Graph& g, Graph::Id fore_logits, int label) {
  return g.cross_entropy(fore_logits, label);
}

Graph::Id diff_loss(Graph& g, Graph::Id scores, Graph::Id fore_scores,
                    Graph::Id back_scores, int label) {
  auto diff = g.sub(fore_scores, back_scores);
  auto mixed = g.scale(g.add(scores, diff), 0.5);
  auto ce1 = g.cross_entropy(diff, label);
  auto ce2 = g.cross_entropy(mixed, label);
  return g.weighted_sum_scalars({ce1, ce2}, {1.0, 1.0});
}

namespace {
// Literal probability-space reading of the Diff Loss for the probs
// score-convention ablation.
Graph::Id diff_loss_probs(Graph& g, Graph::Id s, Graph::Id s_fore, Graph::Id s_back,
                          int label) {
  auto diff = g.sub(s_fore, s_back);
  auto mixed = g.scale(g.add(s, diff), 0.5);
  auto ce1 = g.ce_probs(diff, label);
  auto ce2 = g.ce_probs(mixed, label);
  return g.weighted_sum_scalars({ce1, ce2}, {1.0, 1.0});
}
}  // namespace

Graph::Id expert_objective(Graph& g, CiCamModel& model, BoundParams& params,
                           const Tensor& image, int label, const ExpertConfig& cfg,
                           bool train) {
  if (cfg.mu < 0 || cfg.eta < 0 || cfg.beta < 0 || cfg.delta < 0)
    throw ConfigError("expert_objective: hyperparameters must be nonnegative");
  CiCamOutput out = model.forward(g, params, image, train);
  auto h_node = model.loc_map_node(g, out);
  auto l_causal = causal_loss(g, out.logits1, out.logits2, label, 1.0);
  auto l_area = area_loss(g, h_node);

  MaskPair masks =
      make_masks(g.val(h_node), cfg.mask_threshold, image.dim(1), image.dim(2));

  if (cfg.role == ExpertRole::classification) {
    Tensor i_fore = masked_image(image, masks.foreground);
    // masked re-forward shares the bound parameters; the pool is not updated
    CiCamOutput fore_out = model.forward(g, params, i_fore, false);
    auto l_fore = cfg.probs_convention
                      ? g.ce_probs(g.softmax(fore_out.logits2), label)
                      : fore_loss(g, fore_out.logits2, label);
    return g.weighted_sum_scalars({l_causal, l_fore, l_area}, {1.0, cfg.mu, cfg.eta});
  }

  Tensor i_fore = masked_image(image, masks.foreground);
  Tensor i_back = masked_image(image, masks.background);
  CiCamOutput fore_out = model.forward(g, params, i_fore, false);
  CiCamOutput back_out = model.forward(g, params, i_back, false);
  Graph::Id l_diff;
  if (cfg.probs_convention) {
    l_diff = diff_loss_probs(g, g.softmax(out.logits2), g.softmax(fore_out.logits2),
                             g.softmax(back_out.logits2), label);
  } else {
    l_diff = diff_loss(g, out.logits2, fore_out.logits2, back_out.logits2, label);
  }
  return g.weighted_sum_scalars({l_causal, l_diff, l_area}, {1.0, cfg.beta, cfg.delta});
}

}  // namespace kgcicam
