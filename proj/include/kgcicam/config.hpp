#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kgcicam/tensor.hpp"

namespace kgcicam {

enum class RunRole { baseline, ci_cam, cls_expert, loc_expert, kg_ci_cam };

std::string run_role_name(RunRole role);
RunRole run_role_from_name(const std::string& name);

// Parsed from a line-oriented "key: value" file. Unknown keys are errors;
// keys that only apply to another role are rejected for this one.
struct RunConfig {
  RunRole role = RunRole::ci_cam;

  std::string data_root;
  std::string train_split = "train";
  std::string test_split = "test";
  std::string out_dir = "run_out";

  int n_classes = 5;
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  unsigned long long seed = 1;
  double val_fraction = 0.1;

  // backbone
  std::vector<int> backbone_channels{16, 32, 64, 64};
  std::vector<int> backbone_strides{2, 2, 2, 1};
  std::vector<int> nonlocal_after{1, 2};

  // causal intervention
  double lambda = 0.01;
  double epsilon = 1e-5;
  double rho = 1.0;  // branch-1 CE gate for the standalone ci-cam objective

  // cam / boxes
  std::string gamma_curve = "cosine";
  double box_threshold = 0.2;
  double mask_threshold = 0.2;

  // experts
  double mu = 1.0;
  double eta = 0.04;
  double beta = 0.5;
  double delta = 0.0;
  std::string score_convention = "logits";  // or "probs"

  // knowledge guidance
  double alpha = 0.8;
  double t_cls = 4.0;
  double t_loc = 4.0;
  std::string kl_direction = "forward";  // or "reverse"
  bool t_squared = false;
  bool teacher_cache = true;  // precompute teacher records (no augmentation)
  std::string knowledge_cache;  // optional on-disk cache path
  std::string cls_expert_checkpoint;
  std::string loc_expert_checkpoint;

  void validate() const;
  // Serialize back to config-file text (the checkpoint snapshot format).
  std::string to_text() const;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace kgcicam
