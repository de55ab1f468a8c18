#pragma once

#include <functional>
#include <vector>

#include "kgcicam/tensor.hpp"

namespace kgcicam {

// Reverse-mode autodiff tape. Node values are computed eagerly; calling
// backward(root) accumulates gradients for every node reachable from a
// tracked leaf. One Graph instance per forward pass, single-threaded.
class Graph {
 public:
  using Id = int;

  // Untracked input (no gradient).
  Id constant(Tensor t);
  // Tracked leaf (parameter copy); gradient available after backward().
  Id leaf(Tensor t);

  const Tensor& val(Id id) const { return nodes_[static_cast<size_t>(id)].val; }
  const Tensor& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }
  bool tracked(Id id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  // Elementwise
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double c);
  Id relu(Id a);

  // Neural ops
  Id conv2d(Id x, Id w, Id b, int stride, int pad);
  Id gap(Id x);                   // [d,h,w] -> [d]
  Id linear(Id x, Id w, Id b);    // [d],[n,d],[n] -> [n]
  Id channel_mix(Id x, Id w);     // [d,h,w],[n,d] -> [n,h,w]
  Id matmul_tn(Id a, Id b);       // [k,m],[k,n] -> [m,n] = a^T b
  Id matmul_nt(Id a, Id b);       // [m,k],[n,k] -> [m,n] = a b^T
  Id softmax_rows(Id a);          // [m,n], softmax each row
  Id reshape(Id a, std::vector<int> shape);

  // Losses and map ops
  Id softmax(Id z);                          // [n] -> [n]
  Id cross_entropy(Id logits, int label);    // -log softmax(z)[y], scalar
  // -log(v[y]/sum v) with v = max(p, floor); the literal probability-space
  // cross entropy reading, defined even for negative entries.
  Id ce_probs(Id probs, int label, double floor = 1e-12);
  // KL(softmax(z/T) || q_const), teacher distribution is a constant.
  Id kl_to_const(Id z, const Tensor& q_const, double temperature);
  // KL(q_const || softmax(z/T)), the reversed direction.
  Id kl_from_const(Id z, const Tensor& q_const, double temperature);
  Id spatial_softmax(Id maps, double temperature);  // [n,h,w], softmax over h*w per class
  Id mse(Id a, Id b);                        // scalar mean squared error
  Id mean_all(Id a);                         // scalar mean of all entries
  Id normalize_minmax(Id a);                 // [h,w] -> [h,w] in [0,1]; constant -> zeros
  // Fixed per-class weights (no gradient to weights): sum_i w[i]*maps[i].
  Id weighted_map_sum(Id maps, const std::vector<double>& class_weights);
  Id weighted_sum_scalars(const std::vector<Id>& terms,
                          const std::vector<double>& coeffs);

  void backward(Id root);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Graph&)> back;
  };

  Id emit(Tensor val, bool needs_grad, std::function<void(Graph&)> back);
  Tensor& grad_mut(Id id) { return nodes_[static_cast<size_t>(id)].grad; }

  std::vector<Node> nodes_;
};

}  // namespace kgcicam
