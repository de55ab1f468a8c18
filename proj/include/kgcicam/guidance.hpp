#pragma once

#include <string>
#include <vector>

#include "kgcicam/causal_model.hpp"
#include "kgcicam/experts.hpp"
#include "kgcicam/graph.hpp"
#include "kgcicam/tensor.hpp"

namespace kgcicam {

// Frozen-expert outputs for one input: logits from the classification expert
// and activation maps from the localization expert.
struct KnowledgeRecord {
  Tensor teacher_logits;  // [n]
  Tensor teacher_maps;    // [n,h,w]
  ExpertRole source_role = ExpertRole::classification;
};

struct GuidanceConfig {
  double t_cls = 4.0;
  double t_loc = 4.0;
  double alpha = 0.8;
  // false: KL(student-soft || teacher-soft). true: reversed direction.
  bool reverse_kl = false;
  // Multiply the distillation terms by T^2 (common compensation; off by
  // default).
  bool t_squared_scaling = false;

  void validate() const {
    if (t_cls <= 0 || t_loc <= 0) throw ConfigError("guidance: temperature must be > 0");
    if (alpha < 0 || alpha > 1) throw ConfigError("guidance: alpha must be in [0,1]");
  }
};

// Temperature-scaled softmax of a plain vector.
std::vector<double> soften(const std::vector<double>& z, double temperature);

// KL(soften(Z,T) || soften(Z_teacher,T)) with the student on the left.
Graph::Id logits_guidance_loss(Graph& g, Graph::Id student_logits,
                               const Tensor& teacher_logits, double temperature,
                               bool reverse_kl = false);

// Per class: spatial softmax at temperature T, then MSE against the
// teacher's softened maps, averaged over classes and positions.
Graph::Id activation_guidance_loss(Graph& g, Graph::Id student_maps,
                                   const Tensor& teacher_maps, double temperature);

// alpha*(L_cls + L_loc) + (1-alpha)*L_causal with rho=0; student signals are
// the branch-2 logits and maps.
Graph::Id guidance_total_loss(Graph& g, const CiCamOutput& student,
                              const KnowledgeRecord& cls_record,
                              const KnowledgeRecord& loc_record, int label,
                              const GuidanceConfig& cfg);

// Frozen forwards through both experts for the same input the student sees.
std::pair<KnowledgeRecord, KnowledgeRecord> run_teachers(CiCamModel& cls_expert,
                                                         CiCamModel& loc_expert,
                                                         const Tensor& image);

// Knowledge cache: binary file of per-image records keyed by the expert
// checkpoint hashes; logits and maps stored as 32-bit floats.
struct KnowledgeCache {
  unsigned long long cls_hash = 0;
  unsigned long long loc_hash = 0;
  std::vector<std::string> ids;
  std::vector<KnowledgeRecord> cls_records;
  std::vector<KnowledgeRecord> loc_records;
};

void save_knowledge_cache(const std::string& path, const KnowledgeCache& cache);
KnowledgeCache load_knowledge_cache(const std::string& path);

}  // namespace kgcicam
