#pragma once

#include <vector>

#include "kgcicam/tensor.hpp"

namespace kgcicam::cam {

// Half-open pixel box: (x0,y0) inclusive, (x1,y1) exclusive.
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  long area() const { return static_cast<long>(x1 - x0) * (y1 - y0); }
  bool valid() const { return x0 >= 0 && y0 >= 0 && x0 < x1 && y0 < y1; }
  bool operator==(const Box&) const = default;
};

// Rank-indexed combinational weights; rank 0 = highest-probability class.
struct GammaCurve {
  std::vector<double> weights;

  // cos(pi * rank / (n-1)): +1 at the top rank, -1 at the bottom.
  static GammaCurve cosine(int n);
  // Selects the top-1 class map only.
  static GammaCurve top1(int n);
  // All ranks weighted 1/n.
  static GammaCurve uniform(int n);
  static GammaCurve by_name(const std::string& name, int n);
};

// M[i] = sum_k W[i,k] * X[k]; X is [d,h,w], W is [n,d], result [n,h,w].
Tensor compute_cam(const Tensor& features, const Tensor& classifier_weights);

// H = sum over ranks of gamma(rank) * M[class at rank]; ranks order scores
// descending, ties broken by lower class index.
Tensor combinational_map(const Tensor& maps, const std::vector<double>& scores,
                         const GammaCurve& gamma);

// Per-class gamma weights for a score vector (gamma reindexed from rank to class).
std::vector<double> gamma_by_class(const std::vector<double>& scores,
                                   const GammaCurve& gamma);

// Min-max normalize to [0,1]; a constant map becomes all zeros.
Tensor normalize_map(const Tensor& map);

// Binarize at threshold_fraction * max(map), take the largest 8-connected
// component (ties: the one containing the lexicographically smallest
// (row,col) pixel) and return its tight box. Empty foreground -> full image.
Box extract_box(const Tensor& map, double threshold_fraction);

double iou(const Box& a, const Box& b);

// Nearest-neighbor upsample of a [h,w] map to [out_h,out_w].
Tensor upsample_nearest(const Tensor& map, int out_h, int out_w);

}  // namespace kgcicam::cam
