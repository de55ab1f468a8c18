#include "kgcicam/viz.hpp"

#include <algorithm>
#include <cmath>

#include "kgcicam/data_synth.hpp"

namespace kgcicam {

namespace {

void draw_box(Tensor& img, const cam::Box& box, double r, double g, double b) {
  int H = img.dim(1), W = img.dim(2);
  int x0 = std::clamp(box.x0, 0, W - 1);
  int y0 = std::clamp(box.y0, 0, H - 1);
  int x1 = std::clamp(box.x1 - 1, 0, W - 1);
  int y1 = std::clamp(box.y1 - 1, 0, H - 1);
  auto set = [&](int y, int x) {
    img.at(0, y, x) = r;
    img.at(1, y, x) = g;
    img.at(2, y, x) = b;
  };
  for (int x = x0; x <= x1; ++x) {
    set(y0, x);
    set(y1, x);
  }
  for (int y = y0; y <= y1; ++y) {
    set(y, x0);
    set(y, x1);
  }
}

}  // namespace

Tensor render_overlay(const Tensor& image, const Tensor& loc_map,
                      const cam::Box& predicted,
                      const std::optional<cam::Box>& ground_truth, double blend) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("render_overlay: expected image [3,H,W]");
  if (loc_map.rank() != 2) throw DimensionError("render_overlay: expected map [h,w]");
  int H = image.dim(1), W = image.dim(2);
  Tensor heat = cam::upsample_nearest(loc_map, H, W);
  Tensor out(image.shape());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = std::clamp(heat.at(y, x), 0.0, 1.0);
      // cold blue to hot red
      double hr = v, hg = 0.15 * (1.0 - std::abs(2.0 * v - 1.0)), hb = 1.0 - v;
      out.at(0, y, x) = (1.0 - blend) * image.at(0, y, x) + blend * hr;
      out.at(1, y, x) = (1.0 - blend) * image.at(1, y, x) + blend * hg;
      out.at(2, y, x) = (1.0 - blend) * image.at(2, y, x) + blend * hb;
    }
  if (ground_truth) draw_box(out, *ground_truth, 1.0, 0.1, 0.1);
  draw_box(out, predicted, 0.1, 1.0, 0.1);
  return out;
}

void save_overlay(const std::string& path, const Tensor& image, const Tensor& loc_map,
                  const cam::Box& predicted,
                  const std::optional<cam::Box>& ground_truth) {
  write_ppm(path, render_overlay(image, loc_map, predicted, ground_truth));
}

}  // namespace kgcicam
