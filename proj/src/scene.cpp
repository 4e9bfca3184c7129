#include "starnet/scene.hpp"

#include <algorithm>
#include <cmath>

#include "starnet/error.hpp"

namespace starnet {

namespace {

// Keeps surface samples strictly inside the box despite rounding in the pose transform.
constexpr double kInset = 1e-6;

void validate_range(const SizeRange& r, const std::string& what) {
  if (!(r.lo > 0.0 && r.lo <= r.hi && std::isfinite(r.hi))) {
    throw Error(ErrorCode::kConfig, "scene: invalid size range for " + what);
  }
}

double sample(Rng& rng, const SizeRange& r) { return r.lo == r.hi ? r.lo : uniform(rng, r.lo, r.hi); }

std::size_t sample_count(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo == hi ? lo : std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

struct Placed {
  Box3D box;
  std::size_t spec = 0;
};

Box3D inflated(const Box3D& b, double margin) {
  Box3D out = b;
  out.length += margin;
  out.width += margin;
  return out;
}

bool collides(const Box3D& candidate, std::span<const Placed> placed, double separation,
              std::size_t skip = static_cast<std::size_t>(-1)) {
  const Box3D c = inflated(candidate, separation);
  for (std::size_t i = 0; i < placed.size(); ++i) {
    if (i == skip) continue;
    const Box3D& other = placed[i].box;
    if (bev_far_apart(c, other)) continue;
    if (bev_intersection(c, other) > 0.0) return true;
  }
  return false;
}

std::vector<Placed> place_objects(const SceneGenConfig& config, Rng& rng) {
  std::vector<Placed> placed;
  for (std::size_t s = 0; s < config.objects.size(); ++s) {
    const ObjectSpec& spec = config.objects[s];
    const std::size_t n = sample_count(rng, spec.count_min, spec.count_max);
    for (std::size_t k = 0; k < n; ++k) {
      bool ok = false;
      for (std::size_t attempt = 0; attempt < config.max_placement_attempts && !ok; ++attempt) {
        Box3D b;
        b.length = sample(rng, spec.length);
        b.width = sample(rng, spec.width);
        b.height = sample(rng, spec.height);
        const double reach = 0.5 * std::hypot(b.length, b.width);
        const double lim = config.extent - reach;
        if (lim <= 0.0) break;
        b.cx = uniform(rng, -lim, lim);
        b.cy = uniform(rng, -lim, lim);
        b.cz = 0.5 * b.height;
        b.heading = uniform(rng, -kPi, kPi);
        if (collides(b, placed, config.min_separation)) continue;
        placed.push_back({b, s});
        ok = true;
      }
      if (!ok) {
        throw Error(ErrorCode::kInfeasible,
                    "scene: could not place object of kind '" + spec.name + "' after " +
                        std::to_string(config.max_placement_attempts) + " attempts");
      }
    }
  }
  return placed;
}

void add_feature_values(Rng& rng, double mean, double stddev, std::size_t dim, std::vector<double>& out) {
  out.assign(dim, 0.0);
  if (dim == 0) return;
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : out) v = std::clamp(dist(rng), 0.0, 1.0);
}

// Uniform samples on the four sides and the top of the box, pushed inward by
// a small nonnegative jitter.
void sample_shell(const Box3D& box, const ObjectSpec& spec, std::size_t n, double noise,
                  std::size_t feature_dim, Rng& rng, PointCloud& cloud) {
  const double l = box.length;
  const double w = box.width;
  const double h = box.height;
  const double areas[5] = {w * h, w * h, l * h, l * h, l * w};
  std::discrete_distribution<int> face(std::begin(areas), std::end(areas));
  std::normal_distribution<double> jitter(0.0, noise);
  auto inward = [&](double half) {
    return std::min(half - kInset, std::abs(jitter(rng)) + kInset);
  };
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  std::vector<double> feats;
  for (std::size_t i = 0; i < n; ++i) {
    double lx = uniform(rng, -0.5 * l + kInset, 0.5 * l - kInset);
    double ly = uniform(rng, -0.5 * w + kInset, 0.5 * w - kInset);
    double lz = uniform(rng, -0.5 * h + kInset, 0.5 * h - kInset);
    switch (face(rng)) {
      case 0: lx = 0.5 * l - inward(0.5 * l); break;
      case 1: lx = -0.5 * l + inward(0.5 * l); break;
      case 2: ly = 0.5 * w - inward(0.5 * w); break;
      case 3: ly = -0.5 * w + inward(0.5 * w); break;
      default: lz = 0.5 * h - inward(0.5 * h); break;
    }
    add_feature_values(rng, spec.intensity_mean, spec.intensity_std, feature_dim, feats);
    cloud.add(box.cx + c * lx - s * ly, box.cy + s * lx + c * ly, box.cz + lz, feats);
  }
}

void sample_ground(const SceneGenConfig& config, Rng& rng, PointCloud& cloud) {
  const double side = 2.0 * config.extent;
  const auto n = static_cast<std::size_t>(std::llround(config.ground_density * side * side));
  std::normal_distribution<double> dz(0.0, config.ground_noise);
  std::vector<double> feats(config.feature_dim, config.ground_intensity);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = uniform(rng, -config.extent, config.extent);
    const double y = uniform(rng, -config.extent, config.extent);
    cloud.add(x, y, config.ground_noise > 0.0 ? dz(rng) : 0.0, feats);
  }
}

// Renders world objects into a frame seen from the given world-to-vehicle pose.
Frame render(const SceneGenConfig& config, std::span<const Placed> world, const Pose2D& pose,
             Rng& rng) {
  Frame frame;
  frame.cloud = PointCloud(config.feature_dim);
  frame.pose = pose;
  sample_ground(config, rng, frame.cloud);
  for (const Placed& p : world) {
    const ObjectSpec& spec = config.objects[p.spec];
    const Box3D box = apply_pose(pose, p.box);
    const std::size_t n = sample_count(rng, spec.points_min, spec.points_max);
    sample_shell(box, spec, n, config.ground_noise, config.feature_dim, rng, frame.cloud);
    if (spec.class_id >= 0) frame.labels.push_back({box, spec.class_id});
  }
  return frame;
}

}  // namespace

void validate(const SceneGenConfig& config) {
  if (!(config.extent > 0.0 && std::isfinite(config.extent))) {
    throw Error(ErrorCode::kConfig, "scene.extent must be positive");
  }
  if (!(config.ground_density >= 0.0) || !(config.ground_noise >= 0.0) || !(config.min_separation >= 0.0)) {
    throw Error(ErrorCode::kConfig, "scene: densities, noise and separation must be nonnegative");
  }
  if (!(config.ego_speed_max >= 0.0) || !(config.ego_yaw_rate_max >= 0.0)) {
    throw Error(ErrorCode::kConfig, "scene: ego motion bounds must be nonnegative");
  }
  if (config.max_placement_attempts == 0) {
    throw Error(ErrorCode::kConfig, "scene.max_placement_attempts must be >= 1");
  }
  for (const ObjectSpec& spec : config.objects) {
    if (spec.count_min > spec.count_max || spec.points_min > spec.points_max) {
      throw Error(ErrorCode::kConfig, "scene: min exceeds max for '" + spec.name + "'");
    }
    validate_range(spec.length, spec.name + ".length");
    validate_range(spec.width, spec.name + ".width");
    validate_range(spec.height, spec.name + ".height");
    if (!(spec.intensity_std >= 0.0) || !(spec.speed_max >= 0.0)) {
      throw Error(ErrorCode::kConfig, "scene: negative intensity_std or speed_max for '" + spec.name + "'");
    }
  }
}

SceneGenConfig default_scene_config() {
  SceneGenConfig c;
  ObjectSpec ped;
  ped.name = "pedestrian";
  ped.class_id = 0;
  ped.count_min = 10;
  ped.count_max = 30;
  ped.length = {0.8, 1.0};
  ped.width = {0.8, 1.0};
  ped.height = {1.6, 1.9};
  ped.points_min = 60;
  ped.points_max = 120;
  ped.intensity_mean = 0.6;
  ped.intensity_std = 0.1;
  ped.speed_max = 0.3;

  ObjectSpec wall;
  wall.name = "wall";
  wall.count_min = 15;
  wall.count_max = 25;
  wall.length = {3.0, 8.0};
  wall.width = {0.2, 0.4};
  wall.height = {1.0, 3.0};
  wall.points_min = 200;
  wall.points_max = 500;
  wall.intensity_mean = 0.3;

  ObjectSpec pole;
  pole.name = "pole";
  pole.count_min = 20;
  pole.count_max = 40;
  pole.length = {0.15, 0.3};
  pole.width = {0.15, 0.3};
  pole.height = {2.0, 5.0};
  pole.points_min = 20;
  pole.points_max = 40;
  pole.intensity_mean = 0.8;

  ObjectSpec shrub;
  shrub.name = "shrub";
  shrub.count_min = 30;
  shrub.count_max = 60;
  shrub.length = {0.5, 1.5};
  shrub.width = {0.5, 1.5};
  shrub.height = {0.5, 1.2};
  shrub.points_min = 40;
  shrub.points_max = 100;
  shrub.intensity_mean = 0.4;
  shrub.intensity_std = 0.15;

  c.objects = {ped, wall, pole, shrub};
  return c;
}

Frame generate_scene(const SceneGenConfig& config, Rng& rng) {
  validate(config);
  const std::vector<Placed> world = place_objects(config, rng);
  return render(config, world, Pose2D{}, rng);
}

std::vector<Frame> generate_sequence(const SceneGenConfig& config, std::size_t n_frames, Rng& rng) {
  validate(config);
  if (n_frames < 2) throw Error(ErrorCode::kInvalidArgument, "generate_sequence: n_frames must be >= 2");
  std::vector<Placed> world = place_objects(config, rng);
  std::vector<Vec2> velocity(world.size());
  for (std::size_t i = 0; i < world.size(); ++i) {
    const double vmax = config.objects[world[i].spec].speed_max;
    if (vmax <= 0.0) continue;
    const double speed = uniform(rng, 0.0, vmax);
    const double dir = uniform(rng, -kPi, kPi);
    velocity[i] = {speed * std::cos(dir), speed * std::sin(dir)};
  }
  // Ego state in world coordinates; the frame pose is its inverse.
  Pose2D ego;
  const double ego_speed = uniform(rng, 0.0, config.ego_speed_max);
  const double ego_yaw_rate = uniform(rng, -config.ego_yaw_rate_max, config.ego_yaw_rate_max);

  std::vector<Frame> frames;
  frames.reserve(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (f > 0) {
      for (std::size_t i = 0; i < world.size(); ++i) {
        if (velocity[i].x == 0.0 && velocity[i].y == 0.0) continue;
        Box3D moved = world[i].box;
        moved.cx += velocity[i].x;
        moved.cy += velocity[i].y;
        // Blocked objects wait a frame so boxes stay disjoint.
        if (!collides(moved, world, config.min_separation, i)) world[i].box = moved;
      }
      ego.yaw = wrap_angle(ego.yaw + ego_yaw_rate);
      ego.tx += ego_speed * std::cos(ego.yaw);
      ego.ty += ego_speed * std::sin(ego.yaw);
    }
    Frame frame = render(config, world, inverse(ego), rng);
    frame.frame_id = f;
    frame.timestamp = 0.1 * static_cast<double>(f);
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<std::size_t> label_point_counts(const Frame& frame) {
  std::vector<std::size_t> out;
  out.reserve(frame.labels.size());
  for (const LabeledBox& l : frame.labels) out.push_back(points_in_box(frame.cloud, l.box));
  return out;
}

}  // namespace starnet
