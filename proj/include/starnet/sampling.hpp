#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "starnet/geometry.hpp"
#include "starnet/random.hpp"

namespace starnet {

enum class CenterSource { kRandom, kFps, kTemporalSeed };

enum class SamplerKind { kRandom, kFps };

struct CenterProposal {
  double x = 0.0;
  double y = 0.0;
  // Reference height for re-centering crops: the sampled point's z, or the
  // box center height for temporal seeds.
  double z = 0.0;
  CenterSource source = CenterSource::kFps;
};

struct ZRange {
  double z_min = -std::numeric_limits<double>::infinity();
  double z_max = std::numeric_limits<double>::infinity();
};

inline constexpr ZRange kKittiZRange{-1.35, std::numeric_limits<double>::infinity()};

using IndexSet = std::vector<std::size_t>;

void validate_range(const ZRange& range);

IndexSet z_filter(const PointCloud& cloud, const ZRange& range);

// p_lo-th to p_hi-th percentile of box center heights, linearly interpolated
// between order statistics.
ZRange percentile_z_range(std::span<const Box3D> label_boxes, double p_lo, double p_hi);

// Draws without replacement while n <= |eligible|, with replacement beyond.
// The first m draws do not depend on n.
std::vector<CenterProposal> random_uniform_centers(const PointCloud& cloud,
                                                   std::span<const std::size_t> eligible,
                                                   std::size_t n, Rng& rng);

struct FpsOptions {
  // Position within `eligible` used as the first pick instead of a random one.
  // Ignored when seeds are present.
  std::optional<std::size_t> first;
};

// Greedy 2D farthest point sampling. Seeds count as already chosen for the
// distance set but are not returned. When n exceeds the eligible count the
// output repeats cyclically.
std::vector<CenterProposal> farthest_point_centers(const PointCloud& cloud,
                                                   std::span<const std::size_t> eligible,
                                                   std::size_t n,
                                                   std::span<const CenterProposal> seeds,
                                                   Rng& rng, const FpsOptions& options = {});

struct ScoredBox {
  Box3D box;
  double score = 0.0;
};

// Top-k previous detections by score (ties: lower index), pose-corrected.
std::vector<CenterProposal> temporal_seeds(std::span<const ScoredBox> prev_detections,
                                           const Pose2D& pose_delta, std::size_t k);

// Convenience: seeds followed by sampler output, `total` centers overall.
std::vector<CenterProposal> select_centers(const PointCloud& cloud, const ZRange& range,
                                           SamplerKind sampler, std::size_t total,
                                           std::span<const CenterProposal> seeds, Rng& rng);

double min_pairwise_distance(std::span<const CenterProposal> centers);

}  // namespace starnet
