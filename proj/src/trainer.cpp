#include "kgcicam/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "kgcicam/experts.hpp"
#include "kgcicam/guidance.hpp"

namespace kgcicam {

namespace fs = std::filesystem;

void AdamState::init(const ParamStore& store) {
  step = 0;
  m.clear();
  v.clear();
  for (int i = 0; i < store.count(); ++i) {
    m.push_back(Tensor(store.value(i).shape()));
    v.push_back(Tensor(store.value(i).shape()));
  }
}

void AdamState::apply(ParamStore& store, const std::vector<Tensor>& grads, double lr) {
  if (static_cast<int>(grads.size()) != store.count() ||
      static_cast<int>(m.size()) != store.count())
    throw DimensionError("AdamState::apply: slot count mismatch");
  ++step;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (int i = 0; i < store.count(); ++i) {
    Tensor& p = store.value(i);
    const Tensor& g = grads[static_cast<size_t>(i)];
    Tensor& mi = m[static_cast<size_t>(i)];
    Tensor& vi = v[static_cast<size_t>(i)];
    for (long j = 0; j < p.numel(); ++j) {
      mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
      vi[j] = beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j];
      double mhat = mi[j] / bc1;
      double vhat = vi[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

std::vector<EvalRecord> evaluate_model(CiCamModel& model,
                                       const std::vector<SynthSample>& samples) {
  if (samples.empty()) throw EmptyInputError("evaluate_model: no samples");
  std::vector<EvalRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) {
    Graph g;
    CiCamOutput out = model.forward_image(g, s.image, /*train=*/false);
    EvalRecord rec;
    rec.id = s.id;
    rec.predicted_label = argmax_index(out.s2);
    rec.true_label = s.label;
    rec.localization_map = out.h_map;
    rec.gt_boxes = {s.gt_box};
    rec.image_h = s.image.dim(1);
    rec.image_w = s.image.dim(2);
    records.push_back(std::move(rec));
  }
  return records;
}

CiCamModel load_expert(const std::string& path, const std::string& expected_role) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.role != expected_role)
    throw ConfigError("checkpoint " + path + " has role '" + ckpt.role +
                      "', expected '" + expected_role + "'");
  return model_from_checkpoint(ckpt);
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double selection_score(RunRole role, const Top1Metrics& m) {
  switch (role) {
    case RunRole::cls_expert: return m.top1_cls;
    case RunRole::kg_ci_cam: return m.top1_cls + m.gt_known;
    default: return m.gt_known;
  }
}

struct TeacherBank {
  std::vector<KnowledgeRecord> cls;
  std::vector<KnowledgeRecord> loc;
};

TeacherBank prepare_teachers(const RunConfig& cfg,
                             const std::vector<SynthSample>& train,
                             CiCamModel& cls_expert, CiCamModel& loc_expert,
                             std::ostream* log) {
  TeacherBank bank;
  unsigned long long ch = file_hash(cfg.cls_expert_checkpoint);
  unsigned long long lh = file_hash(cfg.loc_expert_checkpoint);
  if (!cfg.knowledge_cache.empty() && fs::exists(cfg.knowledge_cache)) {
    KnowledgeCache cache = load_knowledge_cache(cfg.knowledge_cache);
    bool ok = cache.cls_hash == ch && cache.loc_hash == lh &&
              cache.ids.size() == train.size();
    for (size_t i = 0; ok && i < train.size(); ++i)
      if (cache.ids[i] != train[i].id) ok = false;
    if (ok) {
      if (log) *log << "teacher records: reused cache " << cfg.knowledge_cache << "\n";
      bank.cls = std::move(cache.cls_records);
      bank.loc = std::move(cache.loc_records);
      return bank;
    }
    if (log) *log << "teacher records: stale cache, recomputing\n";
  }
  bank.cls.reserve(train.size());
  bank.loc.reserve(train.size());
  for (const auto& s : train) {
    auto [cr, lr] = run_teachers(cls_expert, loc_expert, s.image);
    bank.cls.push_back(std::move(cr));
    bank.loc.push_back(std::move(lr));
  }
  if (!cfg.knowledge_cache.empty()) {
    KnowledgeCache cache;
    cache.cls_hash = ch;
    cache.loc_hash = lh;
    for (const auto& s : train) cache.ids.push_back(s.id);
    cache.cls_records = bank.cls;
    cache.loc_records = bank.loc;
    save_knowledge_cache(cfg.knowledge_cache, cache);
  }
  return bank;
}

std::map<std::string, double> metrics_map(const Top1Metrics& m, int epoch,
                                          double score) {
  return {{"top1_cls", m.top1_cls},
          {"top1_loc", m.top1_loc},
          {"gt_known", m.gt_known},
          {"epoch", static_cast<double>(epoch)},
          {"selection_score", score}};
}

}  // namespace

TrainResult train_run(const RunConfig& cfg, const std::vector<SynthSample>& samples,
                      std::ostream* log) {
  cfg.validate();
  if (samples.empty()) throw EmptyInputError("train_run: no training samples");

  BackboneConfig bc;
  bc.in_h = samples[0].image.dim(1);
  bc.in_w = samples[0].image.dim(2);
  bc.stage_channels = cfg.backbone_channels;
  bc.stage_strides = cfg.backbone_strides;
  bc.nonlocal_after = cfg.nonlocal_after;
  bc.validate();

  CiCamSettings settings;
  settings.gamma_curve = cfg.gamma_curve;
  settings.box_threshold = cfg.box_threshold;
  bool use_causal = cfg.role != RunRole::baseline;
  CiCamModel model(bc, cfg.n_classes, cfg.lambda, cfg.epsilon, settings, cfg.seed,
                   use_causal);

  // tail slice of the given samples is the validation set
  size_t n_val = static_cast<size_t>(
      std::lround(cfg.val_fraction * static_cast<double>(samples.size())));
  if (n_val >= samples.size()) n_val = 0;
  std::vector<SynthSample> train(samples.begin(),
                                 samples.end() - static_cast<long>(n_val));
  std::vector<SynthSample> val(samples.end() - static_cast<long>(n_val),
                               samples.end());
  const std::vector<SynthSample>& eval_set = val.empty() ? train : val;

  ExpertConfig ecfg;
  ecfg.role = cfg.role == RunRole::loc_expert ? ExpertRole::localization
                                              : ExpertRole::classification;
  ecfg.mu = cfg.mu;
  ecfg.eta = cfg.eta;
  ecfg.beta = cfg.beta;
  ecfg.delta = cfg.delta;
  ecfg.mask_threshold = cfg.mask_threshold;
  ecfg.probs_convention = cfg.score_convention == "probs";

  GuidanceConfig gcfg;
  gcfg.t_cls = cfg.t_cls;
  gcfg.t_loc = cfg.t_loc;
  gcfg.alpha = cfg.alpha;
  gcfg.reverse_kl = cfg.kl_direction == "reverse";
  gcfg.t_squared_scaling = cfg.t_squared;

  CiCamModel cls_expert, loc_expert;
  TeacherBank teachers;
  if (cfg.role == RunRole::kg_ci_cam) {
    cls_expert = load_expert(cfg.cls_expert_checkpoint, "cls-expert");
    loc_expert = load_expert(cfg.loc_expert_checkpoint, "loc-expert");
    if (cls_expert.n_classes() != cfg.n_classes ||
        loc_expert.n_classes() != cfg.n_classes)
      throw ConfigError("expert checkpoints disagree with n_classes");
    if (cfg.teacher_cache)
      teachers = prepare_teachers(cfg, train, cls_expert, loc_expert, log);
  }

  fs::create_directories(cfg.out_dir);
  std::ofstream epoch_log(fs::path(cfg.out_dir) / "epochs.txt", std::ios::app);

  AdamState adam;
  adam.init(model.params());

  TrainResult result;
  double best_score = -1.0;
  double best_secondary = -1.0;
  std::string best_path = (fs::path(cfg.out_dir) / "best.ckpt").string();
  std::string secondary_path = (fs::path(cfg.out_dir) / "best_top1loc.ckpt").string();

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix(cfg.seed ^ (0x5351ull << 32) ^
                                    static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    long loss_count = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> grads;
      for (int i = 0; i < model.params().count(); ++i)
        grads.push_back(Tensor(model.params().value(i).shape()));
      for (size_t k = start; k < stop; ++k) {
        const SynthSample& s = train[order[k]];
        Graph g;
        BoundParams bp(g, model.params(), /*train=*/true);
        Graph::Id loss;
        switch (cfg.role) {
          case RunRole::baseline:
          case RunRole::ci_cam: {
            CiCamOutput out = model.forward(g, bp, s.image, /*train=*/true);
            double rho = cfg.role == RunRole::baseline ? 0.0 : cfg.rho;
            loss = causal_loss(g, out.logits1, out.logits2, s.label, rho);
            break;
          }
          case RunRole::cls_expert:
          case RunRole::loc_expert:
            loss = expert_objective(g, model, bp, s.image, s.label, ecfg,
                                    /*train=*/true);
            break;
          case RunRole::kg_ci_cam: {
            CiCamOutput out = model.forward(g, bp, s.image, /*train=*/true);
            if (cfg.teacher_cache) {
              loss = guidance_total_loss(g, out, teachers.cls[order[k]],
                                         teachers.loc[order[k]], s.label, gcfg);
            } else {
              auto [cr, lr] = run_teachers(cls_expert, loc_expert, s.image);
              loss = guidance_total_loss(g, out, cr, lr, s.label, gcfg);
            }
            break;
          }
          default:
            throw ConfigError("train_run: unhandled role");
        }
        double lv = g.val(loss).item();
        if (!std::isfinite(lv))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", sample " + s.id);
        loss_sum += lv;
        ++loss_count;
        g.backward(loss);
        bp.accumulate_grads(grads);
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& t : grads)
        for (long j = 0; j < t.numel(); ++j) t[j] *= inv;
      adam.apply(model.params(), grads, cfg.learning_rate);
    }

    std::vector<EvalRecord> records = evaluate_model(model, eval_set);
    Top1Metrics vm = top1_metrics(records, cfg.box_threshold);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    stats.val = vm;
    result.history.push_back(stats);

    std::ostringstream line;
    line << "epoch " << epoch << " loss " << stats.train_loss << " top1_cls "
         << vm.top1_cls << " top1_loc " << vm.top1_loc << " gt_known " << vm.gt_known;
    if (epoch_log) epoch_log << line.str() << std::endl;
    if (log) *log << line.str() << std::endl;

    double score = selection_score(cfg.role, vm);
    if (score > best_score) {
      best_score = score;
      result.best_metrics = metrics_map(vm, epoch, score);
      save_checkpoint(best_path,
                      checkpoint_from_model(model, run_role_name(cfg.role),
                                            cfg.to_text(), result.best_metrics));
      result.best_checkpoint = best_path;
    }
    if (cfg.role == RunRole::loc_expert && vm.top1_loc > best_secondary) {
      best_secondary = vm.top1_loc;
      save_checkpoint(secondary_path,
                      checkpoint_from_model(model, run_role_name(cfg.role),
                                            cfg.to_text(),
                                            metrics_map(vm, epoch, vm.top1_loc)));
      result.secondary_checkpoint = secondary_path;
    }
  }

  save_checkpoint((fs::path(cfg.out_dir) / "final.ckpt").string(),
                  checkpoint_from_model(model, run_role_name(cfg.role), cfg.to_text(),
                                        result.best_metrics));
  return result;
}

}  // namespace kgcicam
