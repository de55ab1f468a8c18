#include "kgcicam/cam_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kgcicam::cam {

GammaCurve GammaCurve::cosine(int n) {
  GammaCurve g;
  g.weights.resize(static_cast<size_t>(n));
  if (n == 1) {
    g.weights[0] = 1.0;
    return g;
  }
  for (int r = 0; r < n; ++r)
    g.weights[static_cast<size_t>(r)] = std::cos(M_PI * r / (n - 1));
  return g;
}

GammaCurve GammaCurve::top1(int n) {
  GammaCurve g;
  g.weights.assign(static_cast<size_t>(n), 0.0);
  g.weights[0] = 1.0;
  return g;
}

GammaCurve GammaCurve::uniform(int n) {
  GammaCurve g;
  g.weights.assign(static_cast<size_t>(n), 1.0 / n);
  return g;
}

GammaCurve GammaCurve::by_name(const std::string& name, int n) {
  if (name == "cosine") return cosine(n);
  if (name == "top1") return top1(n);
  if (name == "uniform") return uniform(n);
  throw ConfigError("unknown gamma curve: " + name);
}

Tensor compute_cam(const Tensor& features, const Tensor& classifier_weights) {
  if (features.rank() != 3 || classifier_weights.rank() != 2)
    throw DimensionError("compute_cam: expected [d,h,w] features and [n,d] weights");
  int d = features.dim(0), h = features.dim(1), w = features.dim(2);
  if (classifier_weights.dim(1) != d)
    throw DimensionError("compute_cam: channel count mismatch");
  int n = classifier_weights.dim(0);
  int N = h * w;
  Tensor maps({n, h, w});
  for (int i = 0; i < n; ++i) {
    double* m = maps.data() + static_cast<long>(i) * N;
    for (int k = 0; k < d; ++k) {
      double wv = classifier_weights.at(i, k);
      const double* x = features.data() + static_cast<long>(k) * N;
      for (int p = 0; p < N; ++p) m[p] += wv * x[p];
    }
  }
  return maps;
}

std::vector<double> gamma_by_class(const std::vector<double>& scores,
                                   const GammaCurve& gamma) {
  size_t n = scores.size();
  if (gamma.weights.size() != n)
    throw DimensionError("gamma_by_class: curve length mismatch");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  std::vector<double> by_class(n);
  for (size_t r = 0; r < n; ++r)
    by_class[static_cast<size_t>(order[r])] = gamma.weights[r];
  return by_class;
}

Tensor combinational_map(const Tensor& maps, const std::vector<double>& scores,
                         const GammaCurve& gamma) {
  if (maps.rank() != 3) throw DimensionError("combinational_map: expected [n,h,w]");
  int n = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  if (static_cast<int>(scores.size()) != n)
    throw DimensionError("combinational_map: score length mismatch");
  std::vector<double> by_class = gamma_by_class(scores, gamma);
  int N = h * w;
  Tensor out({h, w});
  for (int i = 0; i < n; ++i) {
    double wv = by_class[static_cast<size_t>(i)];
    const double* m = maps.data() + static_cast<long>(i) * N;
    for (int p = 0; p < N; ++p) out[p] += wv * m[p];
  }
  return out;
}

Tensor normalize_map(const Tensor& map) {
  long N = map.numel();
  double mn = map[0], mx = map[0];
  for (long i = 1; i < N; ++i) {
    mn = std::min(mn, map[i]);
    mx = std::max(mx, map[i]);
  }
  Tensor out(map.shape());
  if (mx > mn) {
    double inv = 1.0 / (mx - mn);
    for (long i = 0; i < N; ++i) out[i] = (map[i] - mn) * inv;
  }
  return out;
}

Box extract_box(const Tensor& map, double threshold_fraction) {
  if (map.rank() != 2) throw DimensionError("extract_box: expected [h,w]");
  int h = map.dim(0), w = map.dim(1);
  double mx = map[0];
  for (long i = 1; i < map.numel(); ++i) mx = std::max(mx, map[i]);
  double thr = threshold_fraction * mx;

  std::vector<char> fg(static_cast<size_t>(h) * w, 0);
  bool any = false;
  for (int i = 0; i < h * w; ++i) {
    if (map[i] > thr) {
      fg[static_cast<size_t>(i)] = 1;
      any = true;
    }
  }
  if (!any) return Box{0, 0, w, h};

  // Row-major scan discovers components in order of their lexicographically
  // smallest pixel, which is exactly the tie-break order.
  std::vector<char> seen(static_cast<size_t>(h) * w, 0);
  Box best{};
  long best_size = 0;
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    if (!fg[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
    long size = 0;
    int rmin = h, rmax = -1, cmin = w, cmax = -1;
    stack.clear();
    stack.push_back(start);
    seen[static_cast<size_t>(start)] = 1;
    while (!stack.empty()) {
      int p = stack.back();
      stack.pop_back();
      int r = p / w, c = p % w;
      ++size;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
          int q = nr * w + nc;
          if (fg[static_cast<size_t>(q)] && !seen[static_cast<size_t>(q)]) {
            seen[static_cast<size_t>(q)] = 1;
            stack.push_back(q);
          }
        }
    }
    if (size > best_size) {
      best_size = size;
      best = Box{cmin, rmin, cmax + 1, rmax + 1};
    }
  }
  return best;
}

double iou(const Box& a, const Box& b) {
  long ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  long iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  long inter = ix * iy;
  long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

Tensor upsample_nearest(const Tensor& map, int out_h, int out_w) {
  if (map.rank() != 2) throw DimensionError("upsample_nearest: expected [h,w]");
  int h = map.dim(0), w = map.dim(1);
  Tensor out({out_h, out_w});
  for (int r = 0; r < out_h; ++r) {
    int sr = std::min(h - 1, r * h / out_h);
    for (int c = 0; c < out_w; ++c) {
      int sc = std::min(w - 1, c * w / out_w);
      out.at(r, c) = map.at(sr, sc);
    }
  }
  return out;
}

}  // namespace kgcicam::cam
