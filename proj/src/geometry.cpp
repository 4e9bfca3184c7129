#include "starnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "starnet/error.hpp"

namespace starnet {

void PointCloud::add(double x, double y, double z, std::span<const double> features) {
  if (features.size() != feature_dim_) {
    throw Error(ErrorCode::kFeatureDimMismatch,
                "point has " + std::to_string(features.size()) + " features, cloud expects " +
                    std::to_string(feature_dim_));
  }
  data_.push_back(x);
  data_.push_back(y);
  data_.push_back(z);
  data_.insert(data_.end(), features.begin(), features.end());
}

Point PointCloud::point(std::size_t i) const {
  auto f = features(i);
  return Point{x(i), y(i), z(i), std::vector<double>(f.begin(), f.end())};
}

void validate_box(const Box3D& box) {
  const bool ok = std::isfinite(box.cx) && std::isfinite(box.cy) && std::isfinite(box.cz) &&
                  std::isfinite(box.heading) && std::isfinite(box.length) &&
                  std::isfinite(box.width) && std::isfinite(box.height) && box.length > 0 &&
                  box.width > 0 && box.height > 0;
  if (!ok) throw Error(ErrorCode::kDegenerateBox, "box dimensions must be positive and finite");
}

double wrap_angle(double theta) {
  if (!std::isfinite(theta)) throw Error(ErrorCode::kInvalidArgument, "wrap_angle: non-finite");
  double r = std::remainder(theta, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  if (r > kPi) r -= 2.0 * kPi;
  return r;
}

std::array<Vec2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  // Counter-clockwise starting at the front-right corner.
  const double lx[4] = {hl, hl, -hl, -hl};
  const double ly[4] = {-hw, hw, hw, -hw};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {box.cx + c * lx[i] - s * ly[i], box.cy + s * lx[i] + c * ly[i]};
  }
  return out;
}

double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(twice);
}

double convex_intersection_area(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  // Sutherland-Hodgman: clip the subject polygon against each clip edge.
  std::vector<Vec2> poly(subject.begin(), subject.end());
  std::vector<Vec2> next;
  next.reserve(16);
  for (std::size_t e = 0; e < clip.size() && !poly.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % clip.size()];
    const double ex = b.x - a.x;
    const double ey = b.y - a.y;
    auto side = [&](const Vec2& p) { return ex * (p.y - a.y) - ey * (p.x - a.x); };
    next.clear();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& cur = poly[i];
      const Vec2& prev = poly[(i + poly.size() - 1) % poly.size()];
      const double sc = side(cur);
      const double sp = side(prev);
      const bool cur_in = sc >= 0.0;
      const bool prev_in = sp >= 0.0;
      if (cur_in != prev_in) {
        const double t = sp / (sp - sc);
        next.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
      if (cur_in) next.push_back(cur);
    }
    poly.swap(next);
  }
  return polygon_area(poly);
}

bool bev_far_apart(const Box3D& a, const Box3D& b) {
  const double ra = 0.5 * std::hypot(a.length, a.width);
  const double rb = 0.5 * std::hypot(b.length, b.width);
  const double dx = a.cx - b.cx;
  const double dy = a.cy - b.cy;
  const double r = ra + rb;
  return dx * dx + dy * dy >= r * r;
}

double bev_intersection(const Box3D& a, const Box3D& b) {
  validate_box(a);
  validate_box(b);
  if (bev_far_apart(a, b)) return 0.0;
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  return convex_intersection_area(ca, cb);
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.bev_area() + b.bev_area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double inter_bev = bev_intersection(a, b);
  if (inter_bev <= 0.0) return 0.0;
  const double lo = std::max(a.cz - 0.5 * a.height, b.cz - 0.5 * b.height);
  const double hi = std::min(a.cz + 0.5 * a.height, b.cz + 0.5 * b.height);
  const double overlap = hi - lo;
  if (overlap <= 0.0) return 0.0;
  const double inter = inter_bev * overlap;
  const double uni = a.volume() + b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool point_in_box(double x, double y, double z, const Box3D& box) {
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  const double dx = x - box.cx;
  const double dy = y - box.cy;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * box.length && std::abs(ly) <= 0.5 * box.width &&
         std::abs(z - box.cz) <= 0.5 * box.height;
}

std::size_t points_in_box(const PointCloud& cloud, const Box3D& box) {
  validate_box(box);
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (point_in_box(cloud.x(i), cloud.y(i), cloud.z(i), box)) ++n;
  }
  return n;
}

Vec2 apply_pose(const Pose2D& pose, Vec2 p) {
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return {c * p.x - s * p.y + pose.tx, s * p.x + c * p.y + pose.ty};
}

Box3D apply_pose(const Pose2D& pose, const Box3D& box) {
  Box3D out = box;
  const Vec2 c = apply_pose(pose, Vec2{box.cx, box.cy});
  out.cx = c.x;
  out.cy = c.y;
  out.heading = wrap_angle(box.heading + pose.yaw);
  return out;
}

PointCloud apply_pose(const Pose2D& pose, const PointCloud& cloud) {
  PointCloud out = cloud;
  auto& raw = out.raw();
  const std::size_t stride = cloud.stride();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec2 p = apply_pose(pose, Vec2{cloud.x(i), cloud.y(i)});
    raw[i * stride] = p.x;
    raw[i * stride + 1] = p.y;
  }
  return out;
}

Pose2D compose(const Pose2D& a, const Pose2D& b) {
  const Vec2 t = apply_pose(a, Vec2{b.tx, b.ty});
  return {t.x, t.y, wrap_angle(a.yaw + b.yaw)};
}

Pose2D inverse(const Pose2D& pose) {
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return {-(c * pose.tx + s * pose.ty), -(-s * pose.tx + c * pose.ty), wrap_angle(-pose.yaw)};
}

Pose2D relative_pose(const Pose2D& prev_world_to_vehicle, const Pose2D& cur_world_to_vehicle) {
  return compose(cur_world_to_vehicle, inverse(prev_world_to_vehicle));
}

}  // namespace starnet
