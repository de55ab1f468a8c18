// Command-line front end: synth / train / eval / viz / report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "kgcicam/checkpoint.hpp"
#include "kgcicam/config.hpp"
#include "kgcicam/data_synth.hpp"
#include "kgcicam/evaluation.hpp"
#include "kgcicam/trainer.hpp"
#include "kgcicam/viz.hpp"

namespace fs = std::filesystem;
using namespace kgcicam;

namespace {

RunConfig load_cfg(const std::string& path) {
  RunConfig cfg = load_run_config(path);
  // the only supported environment override
  if (const char* od = std::getenv("KGCICAM_OUT_DIR"); od && *od) cfg.out_dir = od;
  return cfg;
}

void check_labels(const RunConfig& cfg, const std::vector<SynthSample>& samples) {
  for (const auto& s : samples)
    if (s.label < 0 || s.label >= cfg.n_classes)
      throw LabelError("sample " + s.id + ": label " + std::to_string(s.label) +
                       " outside n_classes=" + std::to_string(cfg.n_classes));
}

void dump_predictions(const std::string& path, const std::vector<EvalRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IngestionError("cannot write predictions: " + path);
  os.precision(17);
  for (const auto& r : records) {
    os << r.id << " " << r.predicted_label << " " << r.true_label << " " << r.image_h
       << " " << r.image_w << " " << r.localization_map.dim(0) << " "
       << r.localization_map.dim(1);
    for (long i = 0; i < r.localization_map.numel(); ++i)
      os << " " << r.localization_map[i];
    os << "\n";
  }
}

std::vector<EvalRecord> read_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IngestionError("cannot read predictions: " + path);
  std::vector<EvalRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    EvalRecord r;
    int mh = 0, mw = 0;
    if (!(ls >> r.id >> r.predicted_label >> r.true_label >> r.image_h >> r.image_w >>
          mh >> mw))
      throw IngestionError("bad predictions line " + std::to_string(line_no));
    r.localization_map = Tensor({mh, mw});
    for (long i = 0; i < r.localization_map.numel(); ++i)
      if (!(ls >> r.localization_map[i]))
        throw IngestionError("truncated map on predictions line " +
                             std::to_string(line_no));
    records.push_back(std::move(r));
  }
  return records;
}

int run_synth(const RunConfig& cfg, const SynthConfig& synth) {
  SynthDataset ds = generate_dataset(synth);
  save_split(cfg.data_root, cfg.train_split, ds.train);
  save_split(cfg.data_root, cfg.test_split, ds.test);
  std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size()
            << " test samples under " << cfg.data_root << "\n";
  return 0;
}

int run_train(const RunConfig& cfg) {
  auto samples = load_split(cfg.data_root, cfg.train_split);
  check_labels(cfg, samples);
  TrainResult res = train_run(cfg, samples, &std::cout);
  std::cout << "best checkpoint: " << res.best_checkpoint << "\n";
  if (!res.secondary_checkpoint.empty())
    std::cout << "secondary checkpoint: " << res.secondary_checkpoint << "\n";
  return 0;
}

int run_eval(const RunConfig& cfg, const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.n_classes != cfg.n_classes)
    throw ConfigError("checkpoint has " + std::to_string(ckpt.n_classes) +
                      " classes, config expects " + std::to_string(cfg.n_classes));
  CiCamModel model = model_from_checkpoint(ckpt);
  auto samples = load_split(cfg.data_root, cfg.test_split);
  check_labels(cfg, samples);
  auto records = evaluate_model(model, samples);
  fs::create_directories(cfg.out_dir);
  std::string pred_path =
      (fs::path(cfg.out_dir) / (cfg.test_split + "_predictions.txt")).string();
  dump_predictions(pred_path, records);
  MetricReport report =
      full_report(records, cfg.box_threshold, default_threshold_grid());
  std::string report_path =
      (fs::path(cfg.out_dir) / (cfg.test_split + "_report.txt")).string();
  save_report(report_path, report);
  std::cout << format_report(report);
  std::cout << "predictions: " << pred_path << "\nreport: " << report_path << "\n";
  return 0;
}

int run_viz(const RunConfig& cfg, const std::string& ckpt_path, int count) {
  CiCamModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
  fs::path manifest_path = fs::path(cfg.data_root) / (cfg.test_split + ".txt");
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IngestionError("missing manifest: " + manifest_path.string());
  fs::path out_dir = fs::path(cfg.out_dir) / "viz";
  fs::create_directories(out_dir);
  std::string line;
  int done = 0;
  while (done < count && std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, rel;
    int label;
    cam::Box gt;
    if (!(ls >> id >> rel >> label >> gt.x0 >> gt.y0 >> gt.x1 >> gt.y1)) continue;
    Tensor image;
    try {
      image = read_ppm((fs::path(cfg.data_root) / rel).string());
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << id << ": " << e.what() << "\n";
      continue;
    }
    Graph g;
    CiCamOutput out = model.forward_image(g, image, /*train=*/false);
    Tensor up = cam::upsample_nearest(out.h_map, image.dim(1), image.dim(2));
    cam::Box pred = cam::extract_box(up, cfg.box_threshold);
    save_overlay((out_dir / (id + "_overlay.ppm")).string(), image, out.h_map, pred,
                 gt);
    ++done;
  }
  std::cout << "wrote " << done << " overlays under " << out_dir.string() << "\n";
  return 0;
}

int run_report(const RunConfig& cfg, const std::string& pred_path) {
  auto records = read_predictions(pred_path);
  auto samples = load_split(cfg.data_root, cfg.test_split);
  if (samples.size() != records.size())
    throw IngestionError("predictions and manifest disagree on record count");
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].id != samples[i].id)
      throw IngestionError("predictions and manifest disagree at record " +
                           records[i].id);
    records[i].gt_boxes = {samples[i].gt_box};
  }
  MetricReport report =
      full_report(records, cfg.box_threshold, default_threshold_grid());
  std::cout << format_report(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KG-CI-CAM: weakly-supervised localization with causal context and "
               "knowledge guidance"};
  app.require_subcommand(1);

  std::string config_path;
  std::string ckpt_path;
  std::string pred_path;
  int viz_count = 16;
  SynthConfig synth;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file")->required();
  };

  auto* sc_synth = app.add_subcommand("synth", "generate the synthetic benchmark");
  add_config(sc_synth);
  sc_synth->add_option("--train-count", synth.train_count, "training images");
  sc_synth->add_option("--test-count", synth.test_count, "test images");
  sc_synth->add_option("--entanglement-train", synth.entanglement_train,
                       "train-split object/background coupling");
  sc_synth->add_option("--entanglement-test", synth.entanglement_test,
                       "test-split object/background coupling");
  sc_synth->add_option("--synth-seed", synth.seed, "generator seed");
  sc_synth->add_option("--object-scale-min", synth.object_scale_min,
                       "smallest object diameter as a fraction of image size");
  sc_synth->add_option("--object-scale-max", synth.object_scale_max,
                       "largest object diameter as a fraction of image size");

  auto* sc_train = app.add_subcommand("train", "train the configured role");
  add_config(sc_train);

  auto* sc_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config(sc_eval);
  sc_eval->add_option("--checkpoint", ckpt_path, "checkpoint file");

  auto* sc_viz = app.add_subcommand("viz", "emit heatmap overlays");
  add_config(sc_viz);
  sc_viz->add_option("--checkpoint", ckpt_path, "checkpoint file");
  sc_viz->add_option("--count", viz_count, "number of images");

  auto* sc_report = app.add_subcommand("report", "recompute metrics from a dump");
  add_config(sc_report);
  sc_report->add_option("--predictions", pred_path, "predictions dump");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_cfg(config_path);
    if (sc_synth->parsed()) {
      synth.n_classes = cfg.n_classes;
      synth.seed = sc_synth->count("--synth-seed") ? synth.seed : cfg.seed;
      return run_synth(cfg, synth);
    }
    if (sc_train->parsed()) return run_train(cfg);
    std::string default_ckpt = (fs::path(cfg.out_dir) / "best.ckpt").string();
    if (ckpt_path.empty()) ckpt_path = default_ckpt;
    if (sc_eval->parsed()) return run_eval(cfg, ckpt_path);
    if (sc_viz->parsed()) return run_viz(cfg, ckpt_path, viz_count);
    if (sc_report->parsed()) {
      if (pred_path.empty())
        pred_path =
            (fs::path(cfg.out_dir) / (cfg.test_split + "_predictions.txt")).string();
      return run_report(cfg, pred_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return 3;
  } catch (const LabelError& e) {
    std::cerr << "label error: " << e.what() << "\n";
    return 4;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return 4;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
