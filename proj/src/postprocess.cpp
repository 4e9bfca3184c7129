#include "starnet/postprocess.hpp"

#include <algorithm>
#include <numeric>

#include "starnet/error.hpp"

namespace starnet {

std::vector<Detection> score_filter(std::span<const Detection> dets, double min_score) {
  if (!(min_score >= 0.0 && min_score <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "score_filter: min_score must be in [0, 1]");
  }
  std::vector<Detection> out;
  for (const Detection& d : dets) {
    if (d.score >= min_score) out.push_back(d);
  }
  return out;
}

std::vector<std::size_t> oriented_nms_indices(std::span<const Detection> dets, double iou_thresh,
                                              std::size_t max_out) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "oriented_nms: iou_thresh must be in (0, 1)");
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    if (kept.size() >= max_out) break;
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (dets[k].class_id != dets[i].class_id) continue;
      if (bev_far_apart(dets[k].box, dets[i].box)) continue;
      if (bev_iou(dets[k].box, dets[i].box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> oriented_nms(std::span<const Detection> dets, double iou_thresh,
                                    std::size_t max_out) {
  std::vector<Detection> out;
  for (std::size_t i : oriented_nms_indices(dets, iou_thresh, max_out)) out.push_back(dets[i]);
  return out;
}

}  // namespace starnet
