#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "starnet/geometry.hpp"

namespace starnet {

struct Detection {
  Box3D box;
  double score = 0.0;
  int class_id = 0;
};

std::vector<Detection> score_filter(std::span<const Detection> dets, double min_score);

// Greedy oriented NMS on BEV IoU, per class. Returns kept indices in
// descending score order (ties: lower index first).
std::vector<std::size_t> oriented_nms_indices(std::span<const Detection> dets,
                                              double iou_thresh, std::size_t max_out);
std::vector<Detection> oriented_nms(std::span<const Detection> dets, double iou_thresh,
                                    std::size_t max_out);

}  // namespace starnet
