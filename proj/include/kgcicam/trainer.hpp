#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "kgcicam/causal_model.hpp"
#include "kgcicam/checkpoint.hpp"
#include "kgcicam/config.hpp"
#include "kgcicam/data_synth.hpp"
#include "kgcicam/evaluation.hpp"

namespace kgcicam {

// Adam with bias correction. Slot tensors are parallel to the store indices.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  void init(const ParamStore& store);
  void apply(ParamStore& store, const std::vector<Tensor>& grads, double lr);
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  Top1Metrics val;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::map<std::string, double> best_metrics;
  std::string best_checkpoint;
  // loc-expert only: the epoch snapshot that maximized Top-1 Loc instead of
  // GT-known, kept for the guidance-source comparison.
  std::string secondary_checkpoint;
};

// Frozen forward over every sample; maps stay in feature resolution, the
// metrics code upsamples before box extraction.
std::vector<EvalRecord> evaluate_model(CiCamModel& model,
                                       const std::vector<SynthSample>& samples);

// Load an expert checkpoint and reject it if it was trained for another role.
CiCamModel load_expert(const std::string& path, const std::string& expected_role);

// One deterministic training run for the configured role. Checkpoints and the
// epoch log land in cfg.out_dir.
TrainResult train_run(const RunConfig& cfg, const std::vector<SynthSample>& samples,
                      std::ostream* log = nullptr);

}  // namespace kgcicam
