#pragma once

#include <string>
#include <vector>

#include "kgcicam/cam_core.hpp"
#include "kgcicam/tensor.hpp"

namespace kgcicam {

// Synthetic entangled-context benchmark: each class has a distinct object
// signature (shape + color) and a distinct background texture; the
// entanglement probability couples the two.
struct SynthConfig {
  int n_classes = 5;
  int image_h = 64;
  int image_w = 64;
  double entanglement_train = 0.95;
  double entanglement_test = 0.5;
  double object_scale_min = 0.25;
  double object_scale_max = 0.45;
  int train_count = 2000;
  int test_count = 500;
  unsigned long long seed = 1;

  void validate() const;
};

struct SynthSample {
  std::string id;
  Tensor image;  // [3,H,W] in [0,1]
  int label = 0;
  int background_class = 0;  // generation-time metadata, not persisted
  cam::Box gt_box;           // tight bounds of the rendered object pixels
};

struct SynthDataset {
  std::vector<SynthSample> train;
  std::vector<SynthSample> test;
};

SynthDataset generate_dataset(const SynthConfig& cfg);

// One sample; split_tag and index derive the per-sample random stream.
SynthSample generate_sample(const SynthConfig& cfg, int index, int split_tag,
                            double entanglement);

// Disk layout: root/{train,test}/<id>.ppm plus root/{train,test}.txt
// manifests with lines "id path label x0 y0 x1 y1".
void save_split(const std::string& root, const std::string& split,
                const std::vector<SynthSample>& samples);
std::vector<SynthSample> load_split(const std::string& root, const std::string& split);

// Lossless 8-bit binary PPM (P6).
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

}  // namespace kgcicam
