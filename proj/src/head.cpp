#include "starnet/head.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "starnet/error.hpp"

namespace starnet {

void validate(const AnchorConfig& config) {
  if (config.grid_size == 0) throw Error(ErrorCode::kConfig, "anchors.grid_size must be >= 1");
  if (!(config.grid_extent >= 0)) throw Error(ErrorCode::kConfig, "anchors.grid_extent must be >= 0");
  if (config.rotations.empty()) throw Error(ErrorCode::kConfig, "anchors.rotations is empty");
  if (config.priors.empty()) throw Error(ErrorCode::kConfig, "anchors.priors is empty");
  if (config.proj_dim == 0) throw Error(ErrorCode::kConfig, "anchors.proj_dim must be >= 1");
  for (const DimPrior& p : config.priors) {
    if (!(p.length > 0 && p.width > 0 && p.height > 0)) {
      throw Error(ErrorCode::kConfig, "anchors.priors dimensions must be positive");
    }
  }
}

std::vector<double> grid_offsets(const AnchorConfig& config) {
  std::vector<double> offsets(config.grid_size, 0.0);
  if (config.grid_size == 1) return offsets;
  const double step = 2.0 * config.grid_extent / static_cast<double>(config.grid_size - 1);
  for (std::size_t i = 0; i < config.grid_size; ++i) {
    offsets[i] = -config.grid_extent + step * static_cast<double>(i);
  }
  return offsets;
}

std::vector<Anchor> build_anchors(const CenterProposal& center, const AnchorConfig& config) {
  const auto offsets = grid_offsets(config);
  std::vector<Anchor> anchors;
  anchors.reserve(config.anchors_per_center());
  for (std::size_t gy = 0; gy < config.grid_size; ++gy) {
    for (std::size_t gx = 0; gx < config.grid_size; ++gx) {
      const std::size_t offset_index = gy * config.grid_size + gx;
      for (std::size_t p = 0; p < config.priors.size(); ++p) {
        const DimPrior& prior = config.priors[p];
        for (double rot : config.rotations) {
          Anchor a;
          a.box = Box3D{center.x + offsets[gx], center.y + offsets[gy], prior.z,
                        prior.length, prior.width, prior.height, wrap_angle(rot)};
          a.offset_index = offset_index;
          a.prior_index = p;
          a.class_id = prior.class_id;
          anchors.push_back(a);
        }
      }
    }
  }
  return anchors;
}

Residual encode_residuals(const Box3D& gt, const Box3D& anchor) {
  const double diag = std::hypot(anchor.length, anchor.width);
  return {(gt.cx - anchor.cx) / diag,
          (gt.cy - anchor.cy) / diag,
          (gt.cz - anchor.cz) / anchor.height,
          std::log(gt.length / anchor.length),
          std::log(gt.width / anchor.width),
          std::log(gt.height / anchor.height),
          wrap_angle(gt.heading - anchor.heading)};
}

Box3D decode_residuals(const Residual& res, const Box3D& anchor) {
  const double diag = std::hypot(anchor.length, anchor.width);
  return {anchor.cx + res[0] * diag,
          anchor.cy + res[1] * diag,
          anchor.cz + res[2] * anchor.height,
          anchor.length * std::exp(res[3]),
          anchor.width * std::exp(res[4]),
          anchor.height * std::exp(res[5]),
          wrap_angle(anchor.heading + res[6])};
}

// ---------------------------------------------------------------------------
// Head

void HeadParams::collect(std::vector<NamedParam>& params) {
  params.push_back({"head.proj", &proj});
  params.push_back({"head.cls_w", &cls_w});
  params.push_back({"head.cls_b", &cls_b});
  params.push_back({"head.reg_w", &reg_w});
  params.push_back({"head.reg_b", &reg_b});
}

HeadParams init_head(std::size_t input_dim, const AnchorConfig& config, Rng& rng) {
  validate(config);
  HeadParams h;
  h.input_dim = input_dim;
  h.config = config;
  const std::size_t d = config.proj_dim;
  const std::size_t a = config.anchors_per_offset();
  auto fill = [&rng](Param& p, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    for (double& v : p.value.storage()) v = dist(rng);
  };
  h.proj = Param(config.num_offsets() * input_dim, d);
  fill(h.proj, input_dim);
  h.cls_w = Param(d, a);
  fill(h.cls_w, d);
  // Start with a low foreground prior so the focal loss is not swamped early.
  h.cls_b = Param(1, a, -std::log((1.0 - 0.01) / 0.01));
  h.reg_w = Param(d, 7 * a);
  fill(h.reg_w, d);
  for (double& v : h.reg_w.value.storage()) v *= 0.1;
  h.reg_b = Param(1, 7 * a, 0.0);
  return h;
}

HeadOutput head_forward(const Matrix& cell_features, const std::vector<bool>& empty,
                        const HeadParams& params, HeadTape* tape) {
  const std::size_t crops = cell_features.rows();
  const std::size_t in = params.input_dim;
  const std::size_t d = params.config.proj_dim;
  const std::size_t a = params.config.anchors_per_offset();
  const std::size_t offsets = params.config.num_offsets();
  if (cell_features.cols() != in || empty.size() != crops ||
      params.proj.value.rows() != offsets * in || params.proj.value.cols() != d) {
    throw Error(ErrorCode::kShapeMismatch, "head_forward: feature or parameter shape mismatch");
  }
  HeadOutput out;
  out.cls.resize(crops, offsets * a);
  out.reg.resize(crops, offsets * a * 7);
  if (tape) {
    tape->features = cell_features;
    tape->hidden.assign(offsets, Matrix());
  }
  Matrix hidden, logits, reg;
  for (std::size_t o = 0; o < offsets; ++o) {
    hidden.resize(crops, d);
    gemm(cell_features, MatView(params.proj.value.data() + o * in * d, in, d, d), hidden, false);
    matmul(hidden, params.cls_w.value, logits);
    matmul(hidden, params.reg_w.value, reg);
    for (std::size_t c = 0; c < crops; ++c) {
      for (std::size_t j = 0; j < a; ++j) {
        out.cls(c, o * a + j) = empty[c] ? kSuppressedLogit : logits(c, j) + params.cls_b.value(0, j);
      }
      for (std::size_t j = 0; j < 7 * a; ++j) {
        out.reg(c, o * a * 7 + j) = reg(c, j) + params.reg_b.value(0, j);
      }
    }
    if (tape) tape->hidden[o] = hidden;
  }
  return out;
}

Matrix head_backward(const HeadTape& tape, HeadParams& params, const Matrix& d_cls,
                     const Matrix& d_reg) {
  const std::size_t crops = tape.features.rows();
  const std::size_t in = params.input_dim;
  const std::size_t d = params.config.proj_dim;
  const std::size_t a = params.config.anchors_per_offset();
  const std::size_t offsets = params.config.num_offsets();
  if (d_cls.rows() != crops || d_cls.cols() != offsets * a || d_reg.rows() != crops ||
      d_reg.cols() != offsets * a * 7 || tape.hidden.size() != offsets) {
    throw Error(ErrorCode::kShapeMismatch, "head_backward: gradient shape mismatch");
  }
  Matrix d_features(crops, in);
  const Matrix cls_wt = transpose(params.cls_w.value);
  const Matrix reg_wt = transpose(params.reg_w.value);
  Matrix gc(crops, a), gr(crops, 7 * a), d_hidden;
  for (std::size_t o = 0; o < offsets; ++o) {
    for (std::size_t c = 0; c < crops; ++c) {
      for (std::size_t j = 0; j < a; ++j) gc(c, j) = d_cls(c, o * a + j);
      for (std::size_t j = 0; j < 7 * a; ++j) gr(c, j) = d_reg(c, o * a * 7 + j);
    }
    for (std::size_t c = 0; c < crops; ++c) {
      for (std::size_t j = 0; j < a; ++j) params.cls_b.grad(0, j) += gc(c, j);
      for (std::size_t j = 0; j < 7 * a; ++j) params.reg_b.grad(0, j) += gr(c, j);
    }
    const Matrix& hidden = tape.hidden[o];
    gemm_tn(hidden, gc, params.cls_w.grad, true);
    gemm_tn(hidden, gr, params.reg_w.grad, true);
    matmul(gc, cls_wt, d_hidden);
    matmul(gr, reg_wt, d_hidden, true);
    gemm_tn(tape.features, d_hidden, MutMatView(params.proj.grad.data() + o * in * d, in, d, d), true);
    Matrix p_t(d, in);
    const double* p = params.proj.value.data() + o * in * d;
    for (std::size_t i = 0; i < in; ++i) {
      for (std::size_t j = 0; j < d; ++j) p_t(j, i) = p[i * d + j];
    }
    matmul(d_hidden, p_t, d_features, true);
  }
  return d_features;
}

std::uint64_t head_macs(std::size_t input_dim, const AnchorConfig& config) {
  const std::uint64_t d = config.proj_dim;
  const std::uint64_t a = config.anchors_per_offset();
  return config.num_offsets() * (input_dim * d + d * a + d * 7 * a);
}

// ---------------------------------------------------------------------------
// Assignment

Assignment assign_targets(std::span<const Anchor> anchors, std::span<const LabeledBox> gts,
                          const MatchingConfig& config) {
  const std::size_t na = anchors.size();
  const std::size_t ng = gts.size();
  Assignment out;
  out.labels.assign(na, AnchorLabel::kBackground);
  out.matched.assign(na, -1);
  out.targets.assign(na, Residual{});
  if (ng == 0) return out;

  std::vector<double> best_iou(na, 0.0);
  std::vector<int> best_gt(na, -1);
  std::vector<double> gt_best_iou(ng, 0.0);
  std::vector<std::size_t> gt_best_anchor(ng, na);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t g = 0; g < ng; ++g) {
      if (gts[g].class_id != anchors[i].class_id) continue;
      if (bev_far_apart(anchors[i].box, gts[g].box)) continue;
      const double iou = bev_iou(anchors[i].box, gts[g].box);
      if (iou > best_iou[i]) {
        best_iou[i] = iou;
        best_gt[i] = static_cast<int>(g);
      }
      if (iou > gt_best_iou[g]) {
        gt_best_iou[g] = iou;
        gt_best_anchor[g] = i;
      }
    }
  }
  std::vector<bool> gt_has_fg(ng, false);
  for (std::size_t i = 0; i < na; ++i) {
    if (best_iou[i] > config.foreground_iou) {
      out.labels[i] = AnchorLabel::kForeground;
      out.matched[i] = best_gt[i];
      gt_has_fg[static_cast<std::size_t>(best_gt[i])] = true;
    } else if (best_iou[i] >= config.background_iou) {
      out.labels[i] = AnchorLabel::kIgnored;
    }
  }
  if (config.force_match) {
    for (std::size_t g = 0; g < ng; ++g) {
      if (gt_has_fg[g] || gt_best_anchor[g] == na || !(gt_best_iou[g] > 0.0)) continue;
      const std::size_t i = gt_best_anchor[g];
      if (out.labels[i] == AnchorLabel::kForeground) continue;
      out.labels[i] = AnchorLabel::kForeground;
      out.matched[i] = static_cast<int>(g);
      gt_has_fg[g] = true;
    }
  }
  for (std::size_t i = 0; i < na; ++i) {
    if (out.labels[i] != AnchorLabel::kForeground) continue;
    out.targets[i] = encode_residuals(gts[static_cast<std::size_t>(out.matched[i])].box, anchors[i].box);
    ++out.num_foreground;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double focal_loss(double logit, bool foreground, double alpha, double gamma, double* d_logit) {
  const double s = foreground ? 1.0 : -1.0;
  const double z = s * logit;
  const double log_pt = -softplus(-z);
  const double pt = sigmoid(z);
  const double one_minus = sigmoid(-z);
  const double alpha_t = foreground ? alpha : 1.0 - alpha;
  const double mod = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
  if (d_logit) {
    // d/dz of -alpha_t (1-pt)^gamma log pt, with dpt/dz = pt (1-pt).
    const double grad_z = alpha_t * (gamma * mod * pt * log_pt - mod * one_minus);
    *d_logit = s * grad_z;
  }
  return -alpha_t * mod * log_pt;
}

double smooth_l1(double pred, double target, double delta, double* d_pred) {
  const double e = pred - target;
  const double ae = std::abs(e);
  if (ae < delta) {
    if (d_pred) *d_pred = e / delta;
    return 0.5 * e * e / delta;
  }
  if (d_pred) *d_pred = e > 0 ? 1.0 : -1.0;
  return ae - 0.5 * delta;
}

double heading_loss(double pred, double target, HeadingLossMode mode, double delta, double* d_pred) {
  const double diff = pred - target;
  if (mode == HeadingLossMode::kSine) {
    double d = 0.0;
    const double loss = smooth_l1(std::sin(diff), 0.0, delta, &d);
    if (d_pred) *d_pred = d * std::cos(diff);
    return loss;
  }
  return smooth_l1(wrap_angle(diff), 0.0, delta, d_pred);
}

LossBreakdown total_loss(const HeadOutput& out, const Assignment& assignment,
                         const std::vector<bool>& empty, const LossConfig& config,
                         Matrix* d_cls, Matrix* d_reg) {
  const std::size_t crops = out.cls.rows();
  const std::size_t per_cell = out.cls.cols();
  if (assignment.labels.size() != crops * per_cell || empty.size() != crops ||
      out.reg.cols() != per_cell * 7) {
    throw Error(ErrorCode::kShapeMismatch, "total_loss: assignment does not cover the head output");
  }
  if (d_cls) d_cls->resize(crops, per_cell);
  if (d_reg) d_reg->resize(crops, per_cell * 7);

  std::size_t num_fg = 0;
  for (std::size_t c = 0; c < crops; ++c) {
    if (empty[c]) continue;
    for (std::size_t j = 0; j < per_cell; ++j) {
      if (assignment.labels[c * per_cell + j] == AnchorLabel::kForeground) ++num_fg;
    }
  }
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, num_fg));

  LossBreakdown loss;
  loss.num_foreground = num_fg;
  for (std::size_t c = 0; c < crops; ++c) {
    if (empty[c]) continue;
    for (std::size_t j = 0; j < per_cell; ++j) {
      const std::size_t idx = c * per_cell + j;
      const AnchorLabel label = assignment.labels[idx];
      if (label == AnchorLabel::kIgnored) continue;
      const bool fg = label == AnchorLabel::kForeground;
      double g = 0.0;
      loss.classification += focal_loss(out.cls(c, j), fg, config.focal_alpha, config.focal_gamma, &g);
      if (d_cls) (*d_cls)(c, j) = config.cls_weight * g * norm;
      if (!fg) continue;
      const Residual& t = assignment.targets[idx];
      for (std::size_t v = 0; v < 7; ++v) {
        const double pred = out.reg(c, j * 7 + v);
        double gv = 0.0;
        loss.localization += v < 6 ? smooth_l1(pred, t[v], config.smooth_l1_delta, &gv)
                                   : heading_loss(pred, t[v], config.heading, config.smooth_l1_delta, &gv);
        if (d_reg) (*d_reg)(c, j * 7 + v) = config.loc_weight * gv * norm;
      }
    }
  }
  loss.classification *= norm;
  loss.localization *= norm;
  loss.total = config.cls_weight * loss.classification + config.loc_weight * loss.localization;
  return loss;
}

}  // namespace starnet
