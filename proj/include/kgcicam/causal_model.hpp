#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kgcicam/backbone.hpp"
#include "kgcicam/cam_core.hpp"
#include "kgcicam/graph.hpp"
#include "kgcicam/param_store.hpp"

namespace kgcicam {

// Persistent per-class context buffer Q, standardized row-wise on update.
struct CausalContextPool {
  Tensor q;             // [n,h,w], zeros at init
  double update_rate = 0.01;
  double epsilon = 1e-5;

  CausalContextPool() = default;
  CausalContextPool(int n, int h, int w, double lambda, double eps)
      : q({n, h, w}), update_rate(lambda), epsilon(eps) {}

  int n_classes() const { return q.rank() == 3 ? q.dim(0) : 0; }
};

// (map - mean) / sqrt(var + epsilon), statistics over all entries.
Tensor spatial_bn(const Tensor& map, double epsilon);

// Q[pi] <- bn(Q[pi] + lambda * bn(M[pi])), pi = argmax(scores) (ties: lowest
// index). Other rows untouched. Returns pi.
int update_pool(CausalContextPool& pool, const Tensor& maps,
                const std::vector<double>& scores);

int argmax_index(const std::vector<double>& scores);

struct CiCamSettings {
  std::string gamma_curve = "cosine";
  double box_threshold = 0.2;  // fraction of map maximum
};

// One CI-CAM forward: branch-1 (Z,S,M), optional pool update, feature
// enhancement, branch-2 (Ze,Se,Me), combinational map H and box B.
// Node ids refer to the Graph used for the forward; values are snapshots.
struct CiCamOutput {
  Graph::Id features = -1;   // X
  Graph::Id logits1 = -1;    // Z
  Graph::Id maps1 = -1;      // M
  Graph::Id logits2 = -1;    // Ze
  Graph::Id maps2 = -1;      // Me
  Graph::Id loc_map = -1;    // H (normalized combinational map of branch 2)
  std::vector<double> s1;    // softmax(Z)
  std::vector<double> s2;    // softmax(Ze)
  int top_class = -1;        // argmax of branch-1 scores
  Tensor h_map;              // value of loc_map
  cam::Box box;              // extract_box(H, tau)
};

// The CI-CAM model: backbone + shared-weight CAM head + causal context pool
// + 1x1 enhancement projection. With use_causal=false it degrades to the
// single-branch combinational baseline (branch-2 aliases branch-1).
class CiCamModel {
 public:
  CiCamModel() = default;
  CiCamModel(const BackboneConfig& backbone, int n_classes, double lambda,
             double epsilon, const CiCamSettings& settings, unsigned long long seed,
             bool use_causal = true);

  // mode train: pool is updated from branch-1 outputs; params become tracked
  // leaves so gradients flow. mode eval: pool frozen, everything untracked.
  CiCamOutput forward(Graph& g, BoundParams& params, const Tensor& image,
                      bool train);
  CiCamOutput forward_image(Graph& g, const Tensor& image, bool train);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  CausalContextPool& pool() { return pool_; }
  const CausalContextPool& pool() const { return pool_; }
  const BackboneConfig& backbone() const { return backbone_; }
  const CiCamSettings& settings() const { return settings_; }
  int n_classes() const { return n_classes_; }
  bool use_causal() const { return use_causal_; }

  // Build H (normalized combinational map) as a differentiable node from
  // branch-2 maps; used by expert losses.
  Graph::Id loc_map_node(Graph& g, const CiCamOutput& out) const;

 private:
  BackboneConfig backbone_;
  int n_classes_ = 0;
  CiCamSettings settings_;
  bool use_causal_ = true;
  ParamStore params_;
  CausalContextPool pool_;
};

// rho * CE(Z, y) + CE(Ze, y) on pre-softmax logits.
Graph::Id causal_loss(Graph& g, Graph::Id logits1, Graph::Id logits2, int label,
                      double rho);

}  // namespace kgcicam
