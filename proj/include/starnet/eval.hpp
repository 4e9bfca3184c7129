#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "starnet/geometry.hpp"
#include "starnet/postprocess.hpp"

namespace starnet {

struct RangeBucket {
  std::string name;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

std::vector<RangeBucket> default_range_buckets();

struct EvalConfig {
  // Indexed by class id; classes beyond the list use the last entry.
  std::vector<double> iou_threshold{0.5};
  bool use_3d_iou = true;
  std::size_t min_points = 5;
  std::vector<RangeBucket> range_buckets = default_range_buckets();
  std::size_t recall_sample_points = 101;

  double threshold_for(int class_id) const;
};

void validate(const EvalConfig& config);

// Fraction of ground-truth objects with at least min_points points whose best
// BEV IoU against any proposal anchor exceeds iou.
double coverage(std::span<const Box3D> gt_boxes, std::span<const std::size_t> gt_point_counts,
                std::span<const Box3D> anchor_boxes, std::size_t min_points = 5,
                double iou = 0.5);

struct MatchResult {
  std::vector<bool> true_positive;
  std::vector<double> heading_error;  // per detection; 0 for false positives
  std::vector<int> matched_gt;        // -1 when unmatched
};

// Greedy one-to-one matching of score-sorted detections.
MatchResult match_detections(std::span<const Detection> dets, std::span<const Box3D> gts,
                             double iou_thresh, bool use_3d_iou = true);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

// weights: true-positive mass per detection (1 for a plain TP, 0 for FP).
std::vector<PrPoint> pr_curve(const std::vector<bool>& flags, std::span<const double> weights,
                              std::span<const double> scores, std::size_t num_gt);

double interpolated_ap(std::span<const PrPoint> curve, std::size_t points = 101);

double average_precision(const std::vector<bool>& flags, std::span<const double> scores,
                         std::size_t num_gt, std::size_t interpolation_points = 101);

// Each true positive counts (1 - heading_error / pi) toward TP mass.
double heading_weighted_ap(const std::vector<bool>& flags, std::span<const double> heading_errors,
                           std::span<const double> scores, std::size_t num_gt,
                           std::size_t interpolation_points = 101);

struct FrameEval {
  std::vector<Detection> detections;
  std::vector<LabeledBox> labels;
  std::vector<std::size_t> label_point_counts;
};

struct BucketResult {
  std::string bucket;
  double ap = 0.0;
  double aph = 0.0;
  std::size_t num_gt = 0;
  std::size_t true_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t num_detections = 0;
};

// First row is "overall", then one row per configured bucket. Objects and
// detections are bucketed by BEV distance of their center from the origin.
std::vector<BucketResult> range_bucketed_eval(std::span<const FrameEval> frames,
                                              const EvalConfig& config, int class_id);

}  // namespace starnet
