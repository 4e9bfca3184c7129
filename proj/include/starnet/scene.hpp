#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "starnet/geometry.hpp"
#include "starnet/random.hpp"

namespace starnet {

struct SizeRange {
  double lo = 1.0;
  double hi = 1.0;
};

// A family of box-shaped structures. class_id < 0 marks unlabeled clutter.
struct ObjectSpec {
  std::string name;
  int class_id = -1;
  std::size_t count_min = 0;
  std::size_t count_max = 0;
  SizeRange length;
  SizeRange width;
  SizeRange height;
  // Surface points sampled per instance.
  std::size_t points_min = 50;
  std::size_t points_max = 50;
  double intensity_mean = 0.5;
  double intensity_std = 0.1;
  // Per-frame displacement bound for sequences (labeled objects only).
  double speed_max = 0.0;
};

struct SceneGenConfig {
  double extent = 40.0;  // objects and ground span [-extent, extent]^2
  double ground_density = 0.5;
  double ground_noise = 0.02;
  double ground_intensity = 0.1;
  double min_separation = 0.5;
  std::size_t feature_dim = 1;
  std::vector<ObjectSpec> objects;
  double ego_speed_max = 1.0;     // meters per frame
  double ego_yaw_rate_max = 0.02; // radians per frame
  std::size_t max_placement_attempts = 200;
};

void validate(const SceneGenConfig& config);

// Pedestrian-like targets among walls, poles, and shrubs.
SceneGenConfig default_scene_config();

struct Frame {
  PointCloud cloud;
  std::vector<LabeledBox> labels;
  Pose2D pose;  // world-to-vehicle
  double timestamp = 0.0;
  std::uint64_t frame_id = 0;
};

Frame generate_scene(const SceneGenConfig& config, Rng& rng);

// Consecutive frames of one world with moving labeled objects and ego motion.
std::vector<Frame> generate_sequence(const SceneGenConfig& config, std::size_t n_frames,
                                     Rng& rng);

// Points of each label box, counted in the frame's own cloud.
std::vector<std::size_t> label_point_counts(const Frame& frame);

}  // namespace starnet
