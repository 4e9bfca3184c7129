#include "starnet/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "starnet/error.hpp"
#include "starnet/kernels.hpp"

namespace starnet {

void validate_range(const ZRange& range) {
  if (std::isnan(range.z_min) || std::isnan(range.z_max) || !(range.z_min < range.z_max)) {
    throw Error(ErrorCode::kInvalidArgument, "z range requires z_min < z_max");
  }
}

IndexSet z_filter(const PointCloud& cloud, const ZRange& range) {
  validate_range(range);
  IndexSet out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double z = cloud.z(i);
    if (z >= range.z_min && z <= range.z_max) out.push_back(i);
  }
  return out;
}

ZRange percentile_z_range(std::span<const Box3D> label_boxes, double p_lo, double p_hi) {
  if (label_boxes.empty()) throw Error(ErrorCode::kEmptyInput, "percentile_z_range: no labels");
  if (!(p_lo >= 0.0 && p_lo < p_hi && p_hi <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument, "percentile_z_range: need 0 <= p_lo < p_hi <= 100");
  }
  std::vector<double> z;
  z.reserve(label_boxes.size());
  for (const Box3D& b : label_boxes) z.push_back(b.cz);
  std::sort(z.begin(), z.end());
  auto percentile = [&](double p) {
    const double pos = p / 100.0 * static_cast<double>(z.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, z.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return z[lo] + frac * (z[hi] - z[lo]);
  };
  ZRange r{percentile(p_lo), percentile(p_hi)};
  if (!(r.z_min < r.z_max)) {
    throw Error(ErrorCode::kInvalidArgument, "percentile_z_range: degenerate range");
  }
  return r;
}

namespace {

CenterProposal proposal_at(const PointCloud& cloud, std::size_t i, CenterSource source) {
  return {cloud.x(i), cloud.y(i), cloud.z(i), source};
}

}  // namespace

std::vector<CenterProposal> random_uniform_centers(const PointCloud& cloud,
                                                   std::span<const std::size_t> eligible,
                                                   std::size_t n, Rng& rng) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "random_uniform_centers: n must be >= 1");
  if (eligible.empty()) throw Error(ErrorCode::kEmptyInput, "random_uniform_centers: no eligible points");
  std::vector<CenterProposal> out;
  out.reserve(n);
  std::vector<std::size_t> pool(eligible.begin(), eligible.end());
  const std::size_t without = std::min(n, pool.size());
  // Partial Fisher-Yates keeps every prefix a uniform sample.
  for (std::size_t i = 0; i < without; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.push_back(proposal_at(cloud, pool[i], CenterSource::kRandom));
  }
  for (std::size_t i = without; i < n; ++i) {
    out.push_back(proposal_at(cloud, eligible[uniform_index(rng, eligible.size())],
                              CenterSource::kRandom));
  }
  return out;
}

std::vector<CenterProposal> farthest_point_centers(const PointCloud& cloud,
                                                   std::span<const std::size_t> eligible,
                                                   std::size_t n,
                                                   std::span<const CenterProposal> seeds,
                                                   Rng& rng, const FpsOptions& options) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "farthest_point_centers: n must be >= 1");
  if (eligible.empty()) throw Error(ErrorCode::kEmptyInput, "farthest_point_centers: no eligible points");
  const std::size_t m = eligible.size();
  std::vector<double> xs(m), ys(m);
  for (std::size_t i = 0; i < m; ++i) {
    xs[i] = cloud.x(eligible[i]);
    ys[i] = cloud.y(eligible[i]);
  }
  const auto& k = kernels::active_kernels();
  std::vector<double> min_d2(m, std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  for (const CenterProposal& s : seeds) next = k.fps_update(xs.data(), ys.data(), m, s.x, s.y, min_d2.data());
  if (seeds.empty()) {
    if (options.first) {
      if (*options.first >= m) throw Error(ErrorCode::kInvalidArgument, "fps: first pick out of range");
      next = *options.first;
    } else {
      next = uniform_index(rng, m);
    }
  }
  std::vector<CenterProposal> out;
  out.reserve(n);
  const std::size_t picks = std::min(n, m);
  for (std::size_t c = 0; c < picks; ++c) {
    out.push_back(proposal_at(cloud, eligible[next], CenterSource::kFps));
    min_d2[next] = -1.0;  // never re-picked
    if (c + 1 < picks) next = k.fps_update(xs.data(), ys.data(), m, xs[next], ys[next], min_d2.data());
  }
  for (std::size_t c = picks; c < n; ++c) out.push_back(out[c % picks]);
  return out;
}

std::vector<CenterProposal> temporal_seeds(std::span<const ScoredBox> prev_detections,
                                           const Pose2D& pose_delta, std::size_t k) {
  std::vector<std::size_t> order(prev_detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return prev_detections[a].score > prev_detections[b].score;
  });
  std::vector<CenterProposal> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    const Box3D moved = apply_pose(pose_delta, prev_detections[order[i]].box);
    out.push_back({moved.cx, moved.cy, moved.cz, CenterSource::kTemporalSeed});
  }
  return out;
}

std::vector<CenterProposal> select_centers(const PointCloud& cloud, const ZRange& range,
                                           SamplerKind sampler, std::size_t total,
                                           std::span<const CenterProposal> seeds, Rng& rng) {
  std::vector<CenterProposal> out(seeds.begin(), seeds.end());
  if (out.size() >= total) {
    out.resize(total);
    return out;
  }
  const IndexSet eligible = z_filter(cloud, range);
  if (eligible.empty()) return out;
  const std::size_t n = total - out.size();
  std::vector<CenterProposal> sampled =
      sampler == SamplerKind::kFps ? farthest_point_centers(cloud, eligible, n, seeds, rng)
                                   : random_uniform_centers(cloud, eligible, n, rng);
  out.insert(out.end(), sampled.begin(), sampled.end());
  return out;
}

double min_pairwise_distance(std::span<const CenterProposal> centers) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      best = std::min(best, std::hypot(centers[i].x - centers[j].x, centers[i].y - centers[j].y));
    }
  }
  return best;
}

}  // namespace starnet
