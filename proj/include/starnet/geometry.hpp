#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace starnet {

inline constexpr double kPi = 3.14159265358979323846;

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::vector<double> features;
};

// LiDAR returns stored contiguously as (x, y, z, f_0 .. f_{F-1}) records.
class PointCloud {
 public:
  explicit PointCloud(std::size_t feature_dim = 0) : feature_dim_(feature_dim) {}

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t stride() const { return 3 + feature_dim_; }
  std::size_t size() const { return data_.size() / stride(); }
  bool empty() const { return data_.empty(); }

  double x(std::size_t i) const { return data_[i * stride()]; }
  double y(std::size_t i) const { return data_[i * stride() + 1]; }
  double z(std::size_t i) const { return data_[i * stride() + 2]; }
  std::span<const double> features(std::size_t i) const {
    return {data_.data() + i * stride() + 3, feature_dim_};
  }
  std::span<const double> record(std::size_t i) const {
    return {data_.data() + i * stride(), stride()};
  }

  void add(double x, double y, double z, std::span<const double> features = {});
  void add(const Point& p) { add(p.x, p.y, p.z, p.features); }
  Point point(std::size_t i) const;
  void reserve(std::size_t n) { data_.reserve(n * stride()); }

  // Keeps the points whose index satisfies pred, preserving order.
  template <typename Pred>
  PointCloud filtered(Pred pred) const {
    PointCloud out(feature_dim_);
    for (std::size_t i = 0; i < size(); ++i) {
      if (pred(i)) {
        auto r = record(i);
        out.data_.insert(out.data_.end(), r.begin(), r.end());
      }
    }
    return out;
  }

  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

  bool operator==(const PointCloud&) const = default;

 private:
  std::size_t feature_dim_;
  std::vector<double> data_;
};

// Oriented box. length runs along the heading direction, width across it.
struct Box3D {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double heading = 0.0;

  double volume() const { return length * width * height; }
  double bev_area() const { return length * width; }
  bool operator==(const Box3D&) const = default;
};

// Throws kDegenerateBox unless all dimensions are positive and finite.
void validate_box(const Box3D& box);

// Rigid 2D transform: p' = R(yaw) p + t.
struct Pose2D {
  double tx = 0.0;
  double ty = 0.0;
  double yaw = 0.0;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Maps theta into (-pi, pi]. Throws on non-finite input.
double wrap_angle(double theta);

std::array<Vec2, 4> bev_corners(const Box3D& box);

// Area of the intersection of two convex polygons given counter-clockwise.
double convex_intersection_area(std::span<const Vec2> subject, std::span<const Vec2> clip);
double polygon_area(std::span<const Vec2> poly);

double bev_intersection(const Box3D& a, const Box3D& b);
double bev_iou(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

// True when the circumscribed BEV circles are disjoint, so the IoU is zero.
bool bev_far_apart(const Box3D& a, const Box3D& b);

bool point_in_box(double x, double y, double z, const Box3D& box);
std::size_t points_in_box(const PointCloud& cloud, const Box3D& box);

Vec2 apply_pose(const Pose2D& pose, Vec2 p);
Box3D apply_pose(const Pose2D& pose, const Box3D& box);
PointCloud apply_pose(const Pose2D& pose, const PointCloud& cloud);

// compose(a, b) applies b first, then a.
Pose2D compose(const Pose2D& a, const Pose2D& b);
Pose2D inverse(const Pose2D& pose);

// Given world-to-vehicle poses of two frames, the transform taking previous
// vehicle coordinates to current vehicle coordinates.
Pose2D relative_pose(const Pose2D& prev_world_to_vehicle, const Pose2D& cur_world_to_vehicle);

}  // namespace starnet

namespace starnet {

struct LabeledBox {
  Box3D box;
  int class_id = 0;
  bool operator==(const LabeledBox&) const = default;
};

}  // namespace starnet
