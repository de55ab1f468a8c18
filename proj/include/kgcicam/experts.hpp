#pragma once

#include <string>

#include "kgcicam/causal_model.hpp"
#include "kgcicam/graph.hpp"
#include "kgcicam/tensor.hpp"

namespace kgcicam {

enum class ExpertRole { classification, localization };

std::string role_name(ExpertRole role);
ExpertRole role_from_name(const std::string& name);

// Exact complements: foreground + background == all ones.
struct MaskPair {
  Tensor foreground;  // [H,W] binary
  Tensor background;  // [H,W] binary
};

// Binarize the normalized map at threshold_fraction * max, upsample to the
// image resolution by nearest neighbor.
MaskPair make_masks(const Tensor& loc_map, double threshold_fraction, int out_h,
                    int out_w);

// image [3,H,W] * mask [H,W], broadcast over channels.
Tensor masked_image(const Tensor& image, const Tensor& mask);

// Mean activation of the localization map (Area Loss).
Graph::Id area_loss(Graph& g, Graph::Id loc_map);

// Cross-entropy of the foreground-image logits (Fore Loss).
Graph::Id fore_loss(Graph& g, Graph::Id fore_logits, int label);

// CE(S_fore - S_back, y) + CE((S + (S_fore - S_back))/2, y) on score vectors
// (Diff Loss). The score convention (logits vs probabilities) is chosen by
// the caller via which nodes are passed in.
Graph::Id diff_loss(Graph& g, Graph::Id scores, Graph::Id fore_scores,
                    Graph::Id back_scores, int label);

// Hyperparameters of the expert objectives: L^causal + mu*L^fore + eta*L^area
// (classification) or L^causal + beta*L^diff + delta*L^area (localization).
struct ExpertConfig {
  ExpertRole role = ExpertRole::classification;
  double mu = 1.0;     // fore-loss weight
  double eta = 0.04;   // area-loss weight (classification)
  double beta = 0.5;   // diff-loss weight
  double delta = 0.0;  // area-loss weight (localization)
  double mask_threshold = 0.2;
  // false: cross entropy on pre-softmax logits (default). true: the literal
  // probability reading, with clamping where differences go negative.
  bool probs_convention = false;
};

// Assembles the full expert objective for one image on the given graph,
// running the masked re-forward passes through the same bound parameters.
Graph::Id expert_objective(Graph& g, CiCamModel& model, BoundParams& params,
                           const Tensor& image, int label, const ExpertConfig& cfg,
                           bool train);

}  // namespace kgcicam
