#pragma once

#include <optional>
#include <string>

#include "kgcicam/cam_core.hpp"
#include "kgcicam/tensor.hpp"

namespace kgcicam {

// Blend a normalized localization map (feature resolution, upsampled here)
// over the image as a red-blue heat overlay, then draw the predicted box in
// green and, when given, the ground-truth box in red.
Tensor render_overlay(const Tensor& image, const Tensor& loc_map,
                      const cam::Box& predicted,
                      const std::optional<cam::Box>& ground_truth,
                      double blend = 0.45);

void save_overlay(const std::string& path, const Tensor& image, const Tensor& loc_map,
                  const cam::Box& predicted,
                  const std::optional<cam::Box>& ground_truth);

}  // namespace kgcicam
