#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "starnet/geometry.hpp"
#include "starnet/matrix.hpp"
#include "starnet/param.hpp"
#include "starnet/random.hpp"
#include "starnet/sampling.hpp"

namespace starnet {

// Anchor dimensions and center height for one class.
struct DimPrior {
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double z = 0.5;
  int class_id = 0;
};

struct AnchorConfig {
  std::size_t grid_size = 5;
  double grid_extent = 2.0;
  std::vector<double> rotations{0.0, kPi / 2};
  std::vector<DimPrior> priors{DimPrior{}};
  std::size_t proj_dim = 64;

  std::size_t num_offsets() const { return grid_size * grid_size; }
  std::size_t anchors_per_offset() const { return rotations.size() * priors.size(); }
  std::size_t anchors_per_center() const { return num_offsets() * anchors_per_offset(); }
};

void validate(const AnchorConfig& config);

struct Anchor {
  Box3D box;
  std::size_t offset_index = 0;
  std::size_t prior_index = 0;
  int class_id = 0;
};

// Anchors in (offset, prior, rotation) order; offsets row-major in (y, x).
std::vector<Anchor> build_anchors(const CenterProposal& center, const AnchorConfig& config);
std::vector<double> grid_offsets(const AnchorConfig& config);

using Residual = std::array<double, 7>;  // dx, dy, dz, dl, dw, dh, dtheta

Residual encode_residuals(const Box3D& gt, const Box3D& anchor);
Box3D decode_residuals(const Residual& res, const Box3D& anchor);

struct HeadParams {
  std::size_t input_dim = 0;
  AnchorConfig config;
  Param proj;   // (num_offsets * input_dim) x proj_dim, one block per offset
  Param cls_w;  // proj_dim x anchors_per_offset
  Param cls_b;  // 1 x anchors_per_offset
  Param reg_w;  // proj_dim x 7 * anchors_per_offset
  Param reg_b;  // 1 x 7 * anchors_per_offset

  void collect(std::vector<NamedParam>& params);
};

HeadParams init_head(std::size_t input_dim, const AnchorConfig& config, Rng& rng);

// Per-cell outputs; anchor a of cell c sits at column a (x7 for regression)
// with the same order as build_anchors.
struct HeadOutput {
  Matrix cls;  // C x anchors_per_center
  Matrix reg;  // C x 7 * anchors_per_center
};

struct HeadTape {
  Matrix features;
  std::vector<Matrix> hidden;  // per offset, C x proj_dim
};

// Logit assigned to every anchor of a suppressed (empty) cell.
inline constexpr double kSuppressedLogit = -30.0;

HeadOutput head_forward(const Matrix& cell_features, const std::vector<bool>& empty,
                        const HeadParams& params, HeadTape* tape = nullptr);

// Accumulates parameter gradients; returns the gradient w.r.t. cell features.
Matrix head_backward(const HeadTape& tape, HeadParams& params, const Matrix& d_cls,
                     const Matrix& d_reg);

std::uint64_t head_macs(std::size_t input_dim, const AnchorConfig& config);

// ---------------------------------------------------------------------------
// Target assignment and losses.

enum class AnchorLabel : std::int8_t { kBackground, kForeground, kIgnored };

struct MatchingConfig {
  double foreground_iou = 0.6;
  double background_iou = 0.45;
  bool force_match = true;
};

struct Assignment {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched;  // gt index for foreground anchors, else -1
  std::vector<Residual> targets;
  std::size_t num_foreground = 0;
};

// BEV IoU matching. Anchors only match ground truth of their own class.
Assignment assign_targets(std::span<const Anchor> anchors, std::span<const LabeledBox> gts,
                          const MatchingConfig& config = {});

enum class HeadingLossMode { kSine, kWrapped };

struct LossConfig {
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double smooth_l1_delta = 1.0;
  double cls_weight = 1.0;
  double loc_weight = 2.0;
  HeadingLossMode heading = HeadingLossMode::kSine;
};

double sigmoid(double x);

// Sigmoid focal loss of one logit; optional derivative w.r.t. the logit.
double focal_loss(double logit, bool foreground, double alpha, double gamma,
                  double* d_logit = nullptr);
double smooth_l1(double pred, double target, double delta = 1.0, double* d_pred = nullptr);
double heading_loss(double pred, double target, HeadingLossMode mode, double delta = 1.0,
                    double* d_pred = nullptr);

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double localization = 0.0;
  std::size_t num_foreground = 0;
};

// Assignment covers all anchors of all cells, cell-major. Empty cells and
// ignored anchors contribute nothing. Gradients are written when non-null.
LossBreakdown total_loss(const HeadOutput& out, const Assignment& assignment,
                         const std::vector<bool>& empty, const LossConfig& config,
                         Matrix* d_cls = nullptr, Matrix* d_reg = nullptr);

}  // namespace starnet
