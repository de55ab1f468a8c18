#pragma once

#include <map>
#include <string>
#include <vector>

#include "kgcicam/cam_core.hpp"
#include "kgcicam/tensor.hpp"

namespace kgcicam {

struct EmptyInputError : std::runtime_error {
  explicit EmptyInputError(const std::string& what) : std::runtime_error(what) {}
};

// One evaluated image: prediction, ground truth, and the localization map in
// feature resolution (upsampled to image coordinates before box extraction).
struct EvalRecord {
  std::string id;
  int predicted_label = 0;
  int true_label = 0;
  Tensor localization_map;       // [h,w], normalized
  std::vector<cam::Box> gt_boxes;  // image-resolution, nonempty
  int image_h = 0;
  int image_w = 0;
};

struct Top1Metrics {
  double top1_cls = 0.0;
  double top1_loc = 0.0;
  double gt_known = 0.0;
};

struct MetricReport {
  Top1Metrics top1;
  double maxboxaccv2 = 0.0;
  // per IoU threshold: best box accuracy over the map-threshold grid, and
  // the grid value achieving it
  std::vector<double> iou_thresholds;
  std::vector<double> best_box_acc;
  std::vector<double> best_map_threshold;
};

std::vector<double> default_threshold_grid();  // 0.05, 0.10, ..., 0.95

// Upsample record map to image size, extract a box at box_threshold, test
// IoU >= iou_threshold against any gt box.
Top1Metrics top1_metrics(const std::vector<EvalRecord>& records, double box_threshold,
                         double iou_threshold = 0.5);

double maxboxaccv2(const std::vector<EvalRecord>& records,
                   const std::vector<double>& iou_thresholds,
                   const std::vector<double>& map_threshold_grid);

MetricReport full_report(const std::vector<EvalRecord>& records, double box_threshold,
                         const std::vector<double>& map_threshold_grid);

// Best IoU of the extracted box against the record's gt boxes, after
// nearest-neighbor upsampling of the map to image resolution.
double record_best_iou(const EvalRecord& rec, double map_threshold);

std::string format_report(const MetricReport& report);
void save_report(const std::string& path, const MetricReport& report);

}  // namespace kgcicam
