#pragma once

#include <map>
#include <string>

#include "kgcicam/causal_model.hpp"
#include "kgcicam/config.hpp"

namespace kgcicam {

// Everything needed to re-run evaluation: parameters, pool, config snapshot
// and the selection metrics recorded when the checkpoint was saved.
struct Checkpoint {
  int format_version = 1;
  std::string role;
  std::string config_text;
  BackboneConfig backbone;
  int n_classes = 0;
  bool use_causal = true;
  CiCamSettings settings;
  ParamStore params;
  CausalContextPool pool;
  std::map<std::string, double> selection_metrics;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_model(const CiCamModel& model, const std::string& role,
                                 const std::string& config_text,
                                 const std::map<std::string, double>& metrics);
CiCamModel model_from_checkpoint(const Checkpoint& ckpt);

// FNV-1a over the file bytes; used for knowledge-cache invalidation.
unsigned long long file_hash(const std::string& path);

}  // namespace kgcicam
