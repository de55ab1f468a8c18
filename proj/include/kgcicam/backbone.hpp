#pragma once

#include <string>
#include <vector>

#include "kgcicam/graph.hpp"
#include "kgcicam/param_store.hpp"
#include "kgcicam/tensor.hpp"

namespace kgcicam {

// Fully convolutional feature extractor: 3x3 conv stages with configurable
// strides, plus self-attention (non-local) blocks after chosen stages.
struct BackboneConfig {
  int in_h = 64;
  int in_w = 64;
  std::vector<int> stage_channels{16, 32, 64, 64};
  std::vector<int> stage_strides{2, 2, 2, 1};
  std::vector<int> nonlocal_after{1, 2};  // stage indices (0-based)

  int out_channels() const { return stage_channels.back(); }
  int downsample_factor() const {
    int f = 1;
    for (int s : stage_strides) f *= s;
    return f;
  }
  int out_h() const { return in_h / downsample_factor(); }
  int out_w() const { return in_w / downsample_factor(); }
  void validate() const;
};

// Registers backbone parameters ("backbone.*") into the store. Conv weights
// are He-initialized from the given rng; non-local output projections start
// at zero so each block begins as the identity.
void init_backbone_params(const BackboneConfig& cfg, ParamStore& store,
                          std::mt19937_64& rng);

// image [3,H,W] -> features [d,h,w] on the tape.
Graph::Id backbone_forward(Graph& g, const BackboneConfig& cfg, Graph::Id image,
                           BoundParams& params);

// Residual embedded-Gaussian self-attention over spatial positions.
// y = x + Conv1x1(Attention(x)). `prefix` names the block's parameters.
// If attention_out is non-null it receives the [N,N] row-stochastic
// attention matrix (N = h*w).
Graph::Id nonlocal_block(Graph& g, Graph::Id x, const std::string& prefix,
                         BoundParams& params, Tensor* attention_out = nullptr);

// Convenience wrapper matching the feature-extractor contract on plain
// tensors (eval mode, no gradients).
Tensor extract_features(const BackboneConfig& cfg, const ParamStore& store,
                        const Tensor& image);

}  // namespace kgcicam
