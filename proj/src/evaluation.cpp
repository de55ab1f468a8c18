#include "kgcicam/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace kgcicam {

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
  return grid;
}

double record_best_iou(const EvalRecord& rec, double map_threshold) {
  Tensor up = cam::upsample_nearest(rec.localization_map, rec.image_h, rec.image_w);
  cam::Box box = cam::extract_box(up, map_threshold);
  double best = 0.0;
  for (const auto& gt : rec.gt_boxes) best = std::max(best, cam::iou(box, gt));
  return best;
}

Top1Metrics top1_metrics(const std::vector<EvalRecord>& records, double box_threshold,
                         double iou_threshold) {
  if (records.empty()) throw EmptyInputError("top1_metrics: no records");
  long n_cls = 0, n_loc = 0, n_gt = 0;
  for (const auto& rec : records) {
    if (rec.gt_boxes.empty()) throw EmptyInputError("top1_metrics: record without gt boxes");
    bool cls_ok = rec.predicted_label == rec.true_label;
    bool box_ok = record_best_iou(rec, box_threshold) >= iou_threshold;
    n_cls += cls_ok;
    n_gt += box_ok;
    n_loc += cls_ok && box_ok;
  }
  double inv = 1.0 / static_cast<double>(records.size());
  return {n_cls * inv, n_loc * inv, n_gt * inv};
}

double maxboxaccv2(const std::vector<EvalRecord>& records,
                   const std::vector<double>& iou_thresholds,
                   const std::vector<double>& map_threshold_grid) {
  if (records.empty()) throw EmptyInputError("maxboxaccv2: no records");
  if (map_threshold_grid.empty()) throw ConfigError("maxboxaccv2: empty threshold grid");
  // best IoU per (record, tau) is shared across delta thresholds
  std::vector<std::vector<double>> best_iou(records.size());
  for (size_t r = 0; r < records.size(); ++r) {
    best_iou[r].reserve(map_threshold_grid.size());
    for (double tau : map_threshold_grid)
      best_iou[r].push_back(record_best_iou(records[r], tau));
  }
  double total = 0.0;
  for (double delta : iou_thresholds) {
    double best_acc = 0.0;
    for (size_t t = 0; t < map_threshold_grid.size(); ++t) {
      long hits = 0;
      for (size_t r = 0; r < records.size(); ++r)
        if (best_iou[r][t] >= delta) ++hits;
      best_acc = std::max(best_acc, static_cast<double>(hits) / records.size());
    }
    total += best_acc;
  }
  return total / static_cast<double>(iou_thresholds.size());
}

MetricReport full_report(const std::vector<EvalRecord>& records, double box_threshold,
                         const std::vector<double>& map_threshold_grid) {
  MetricReport report;
  report.top1 = top1_metrics(records, box_threshold);
  report.iou_thresholds = {0.3, 0.5, 0.7};
  std::vector<std::vector<double>> best_iou(records.size());
  for (size_t r = 0; r < records.size(); ++r)
    for (double tau : map_threshold_grid)
      best_iou[r].push_back(record_best_iou(records[r], tau));
  double total = 0.0;
  for (double delta : report.iou_thresholds) {
    double best_acc = 0.0, best_tau = map_threshold_grid.front();
    for (size_t t = 0; t < map_threshold_grid.size(); ++t) {
      long hits = 0;
      for (size_t r = 0; r < records.size(); ++r)
        if (best_iou[r][t] >= delta) ++hits;
      double acc = static_cast<double>(hits) / records.size();
      if (acc > best_acc) {
        best_acc = acc;
        best_tau = map_threshold_grid[t];
      }
    }
    report.best_box_acc.push_back(best_acc);
    report.best_map_threshold.push_back(best_tau);
    total += best_acc;
  }
  report.maxboxaccv2 = total / static_cast<double>(report.iou_thresholds.size());
  return report;
}

std::string format_report(const MetricReport& report) {
  std::ostringstream os;
  os.precision(6);
  os << "top1_cls: " << report.top1.top1_cls << "\n";
  os << "top1_loc: " << report.top1.top1_loc << "\n";
  os << "gt_known: " << report.top1.gt_known << "\n";
  os << "maxboxaccv2: " << report.maxboxaccv2 << "\n";
  for (size_t i = 0; i < report.iou_thresholds.size(); ++i) {
    os << "boxacc_iou_" << report.iou_thresholds[i] << ": " << report.best_box_acc[i]
       << " (best_tau " << report.best_map_threshold[i] << ")\n";
  }
  return os.str();
}

void save_report(const std::string& path, const MetricReport& report) {
  std::ofstream os(path);
  if (!os) throw IngestionError("cannot write report: " + path);
  os << format_report(report);
}

}  // namespace kgcicam
