#include "starnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "starnet/error.hpp"

namespace starnet {

std::vector<RangeBucket> default_range_buckets() {
  return {{"0-30m", 0.0, 30.0},
          {"30-50m", 30.0, 50.0},
          {"50m-inf", 50.0, std::numeric_limits<double>::infinity()}};
}

double EvalConfig::threshold_for(int class_id) const {
  if (iou_threshold.empty()) return 0.5;
  const auto i = static_cast<std::size_t>(std::max(0, class_id));
  return iou_threshold[std::min(i, iou_threshold.size() - 1)];
}

void validate(const EvalConfig& config) {
  for (double t : config.iou_threshold) {
    if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::kConfig, "eval.iou_threshold entries must be in (0, 1)");
  }
  if (config.recall_sample_points < 2) {
    throw Error(ErrorCode::kConfig, "eval.recall_sample_points must be >= 2");
  }
  auto buckets = config.range_buckets;
  std::sort(buckets.begin(), buckets.end(),
            [](const RangeBucket& a, const RangeBucket& b) { return a.lo < b.lo; });
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (!(buckets[i].lo < buckets[i].hi)) throw Error(ErrorCode::kConfig, "eval.range_buckets: lo must be < hi");
    if (i > 0 && buckets[i].lo < buckets[i - 1].hi) {
      throw Error(ErrorCode::kConfig, "eval.range_buckets overlap");
    }
  }
}

double coverage(std::span<const Box3D> gt_boxes, std::span<const std::size_t> gt_point_counts,
                std::span<const Box3D> anchor_boxes, std::size_t min_points, double iou) {
  if (gt_boxes.size() != gt_point_counts.size()) {
    throw Error(ErrorCode::kShapeMismatch, "coverage: one point count per box required");
  }
  std::size_t qualifying = 0;
  std::size_t covered = 0;
  for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
    if (gt_point_counts[g] < min_points) continue;
    ++qualifying;
    for (const Box3D& a : anchor_boxes) {
      if (bev_far_apart(a, gt_boxes[g])) continue;
      if (bev_iou(a, gt_boxes[g]) > iou) {
        ++covered;
        break;
      }
    }
  }
  if (qualifying == 0) throw Error(ErrorCode::kEmptyInput, "coverage: no objects with enough points");
  return static_cast<double>(covered) / static_cast<double>(qualifying);
}

MatchResult match_detections(std::span<const Detection> dets, std::span<const Box3D> gts,
                             double iou_thresh, bool use_3d_iou) {
  MatchResult out;
  out.true_positive.assign(dets.size(), false);
  out.heading_error.assign(dets.size(), 0.0);
  out.matched_gt.assign(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = iou_thresh;
    int best_g = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || bev_far_apart(dets[d].box, gts[g])) continue;
      const double iou = use_3d_iou ? iou_3d(dets[d].box, gts[g]) : bev_iou(dets[d].box, gts[g]);
      if (iou > best) {
        best = iou;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g < 0) continue;
    taken[static_cast<std::size_t>(best_g)] = true;
    out.true_positive[d] = true;
    out.matched_gt[d] = best_g;
    out.heading_error[d] = std::abs(wrap_angle(dets[d].box.heading - gts[static_cast<std::size_t>(best_g)].heading));
  }
  return out;
}

std::vector<PrPoint> pr_curve(const std::vector<bool>& flags, std::span<const double> weights,
                              std::span<const double> scores, std::size_t num_gt) {
  if (flags.size() != scores.size() || weights.size() != scores.size()) {
    throw Error(ErrorCode::kShapeMismatch, "pr_curve: flags, weights and scores must align");
  }
  if (num_gt == 0) throw Error(ErrorCode::kInvalidArgument, "pr_curve: num_gt must be >= 1");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<PrPoint> curve;
  curve.reserve(order.size());
  double tp = 0.0;
  std::size_t seen = 0;
  for (std::size_t i : order) {
    ++seen;
    if (flags[i]) tp += weights[i];
    curve.push_back({tp / static_cast<double>(num_gt), tp / static_cast<double>(seen), scores[i]});
  }
  return curve;
}

double interpolated_ap(std::span<const PrPoint> curve, std::size_t points) {
  if (points < 2) throw Error(ErrorCode::kInvalidArgument, "interpolated_ap: need >= 2 points");
  // Running max of precision from the tail gives max precision at recall >= r.
  std::vector<double> tail_max(curve.size() + 1, 0.0);
  for (std::size_t i = curve.size(); i-- > 0;) tail_max[i] = std::max(tail_max[i + 1], curve[i].precision);
  double sum = 0.0;
  std::size_t at = 0;
  for (std::size_t s = 0; s < points; ++s) {
    const double r = static_cast<double>(s) / static_cast<double>(points - 1);
    while (at < curve.size() && curve[at].recall < r - 1e-12) ++at;
    sum += tail_max[at];
  }
  return sum / static_cast<double>(points);
}

double average_precision(const std::vector<bool>& flags, std::span<const double> scores,
                         std::size_t num_gt, std::size_t interpolation_points) {
  const std::vector<double> ones(scores.size(), 1.0);
  return interpolated_ap(pr_curve(flags, ones, scores, num_gt), interpolation_points);
}

double heading_weighted_ap(const std::vector<bool>& flags, std::span<const double> heading_errors,
                           std::span<const double> scores, std::size_t num_gt,
                           std::size_t interpolation_points) {
  if (heading_errors.size() != scores.size()) {
    throw Error(ErrorCode::kShapeMismatch, "heading_weighted_ap: heading errors must align with scores");
  }
  std::vector<double> weights(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    weights[i] = std::clamp(1.0 - heading_errors[i] / kPi, 0.0, 1.0);
  }
  return interpolated_ap(pr_curve(flags, weights, scores, num_gt), interpolation_points);
}

namespace {

double bev_range(const Box3D& b) { return std::hypot(b.cx, b.cy); }

struct Pooled {
  std::vector<bool> flags;
  std::vector<double> heading_errors;
  std::vector<double> scores;
  std::size_t num_gt = 0;
  std::size_t num_tp = 0;
};

void accumulate_frame(const FrameEval& frame, const EvalConfig& config, int class_id, double lo,
                      double hi, Pooled& pool) {
  auto in_range = [&](const Box3D& b) {
    const double r = bev_range(b);
    return r >= lo && r < hi;
  };
  std::vector<Box3D> gts;
  std::vector<bool> hard;  // too few points: neither counted nor penalized
  for (std::size_t g = 0; g < frame.labels.size(); ++g) {
    const LabeledBox& l = frame.labels[g];
    if (l.class_id != class_id || !in_range(l.box)) continue;
    gts.push_back(l.box);
    const std::size_t pts = g < frame.label_point_counts.size() ? frame.label_point_counts[g] : 0;
    hard.push_back(pts < config.min_points);
  }
  std::vector<Detection> dets;
  for (const Detection& d : frame.detections) {
    if (d.class_id == class_id && in_range(d.box)) dets.push_back(d);
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  const MatchResult m = match_detections(dets, gts, config.threshold_for(class_id), config.use_3d_iou);
  for (bool h : hard) pool.num_gt += h ? 0 : 1;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (m.matched_gt[d] >= 0 && hard[static_cast<std::size_t>(m.matched_gt[d])]) continue;
    pool.flags.push_back(m.true_positive[d]);
    pool.heading_errors.push_back(m.heading_error[d]);
    pool.scores.push_back(dets[d].score);
    if (m.true_positive[d]) ++pool.num_tp;
  }
}

BucketResult finish(const std::string& name, const Pooled& pool, const EvalConfig& config) {
  BucketResult r;
  r.bucket = name;
  r.num_gt = pool.num_gt;
  r.true_positives = pool.num_tp;
  r.false_negatives = pool.num_gt - pool.num_tp;
  r.num_detections = pool.scores.size();
  if (pool.num_gt > 0) {
    r.ap = average_precision(pool.flags, pool.scores, pool.num_gt, config.recall_sample_points);
    r.aph = heading_weighted_ap(pool.flags, pool.heading_errors, pool.scores, pool.num_gt,
                                config.recall_sample_points);
  }
  return r;
}

}  // namespace

std::vector<BucketResult> range_bucketed_eval(std::span<const FrameEval> frames,
                                              const EvalConfig& config, int class_id) {
  std::vector<BucketResult> out;
  Pooled overall;
  for (const FrameEval& f : frames) {
    accumulate_frame(f, config, class_id, 0.0, std::numeric_limits<double>::infinity(), overall);
  }
  out.push_back(finish("overall", overall, config));
  for (const RangeBucket& b : config.range_buckets) {
    Pooled pool;
    for (const FrameEval& f : frames) accumulate_frame(f, config, class_id, b.lo, b.hi, pool);
    out.push_back(finish(b.name, pool, config));
  }
  return out;
}

}  // namespace starnet
