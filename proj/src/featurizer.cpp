#include "starnet/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "starnet/error.hpp"
#include "starnet/kernels.hpp"

namespace starnet {

// ---------------------------------------------------------------------------
// Neighborhoods

NeighborIndex::NeighborIndex(const PointCloud& cloud, double cell_size)
    : cloud_(&cloud), cell_size_(cell_size) {
  if (!(cell_size > 0)) throw Error(ErrorCode::kInvalidArgument, "NeighborIndex: cell size must be > 0");
  const std::size_t n = cloud.size();
  if (n == 0) return;
  double max_x = cloud.x(0), max_y = cloud.y(0);
  min_x_ = max_x;
  min_y_ = max_y;
  for (std::size_t i = 1; i < n; ++i) {
    min_x_ = std::min(min_x_, cloud.x(i));
    min_y_ = std::min(min_y_, cloud.y(i));
    max_x = std::max(max_x, cloud.x(i));
    max_y = std::max(max_y, cloud.y(i));
  }
  nx_ = static_cast<std::size_t>((max_x - min_x_) / cell_size_) + 1;
  ny_ = static_cast<std::size_t>((max_y - min_y_) / cell_size_) + 1;
  std::vector<std::uint32_t> cell_of(n);
  cell_start_.assign(nx_ * ny_ + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cx = static_cast<std::size_t>((cloud.x(i) - min_x_) / cell_size_);
    const auto cy = static_cast<std::size_t>((cloud.y(i) - min_y_) / cell_size_);
    cell_of[i] = static_cast<std::uint32_t>(std::min(cy, ny_ - 1) * nx_ + std::min(cx, nx_ - 1));
    ++cell_start_[cell_of[i] + 1];
  }
  std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
  entries_.resize(n);
  std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < n; ++i) entries_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
}

std::vector<std::size_t> NeighborIndex::query(double x, double y, double radius) const {
  std::vector<std::size_t> out;
  if (entries_.empty()) return out;
  auto clamp_cell = [](double v, std::size_t n) -> std::size_t {
    if (v < 0) return 0;
    return std::min(static_cast<std::size_t>(v), n - 1);
  };
  const double gx0 = (x - radius - min_x_) / cell_size_;
  const double gx1 = (x + radius - min_x_) / cell_size_;
  const double gy0 = (y - radius - min_y_) / cell_size_;
  const double gy1 = (y + radius - min_y_) / cell_size_;
  if (gx1 < 0 || gy1 < 0 || gx0 >= static_cast<double>(nx_) || gy0 >= static_cast<double>(ny_)) return out;
  const double r2 = radius * radius;
  for (std::size_t cy = clamp_cell(gy0, ny_); cy <= clamp_cell(gy1, ny_); ++cy) {
    for (std::size_t cx = clamp_cell(gx0, nx_); cx <= clamp_cell(gx1, nx_); ++cx) {
      const std::size_t cell = cy * nx_ + cx;
      for (std::uint32_t e = cell_start_[cell]; e < cell_start_[cell + 1]; ++e) {
        const std::size_t i = entries_[e];
        const double dx = cloud_->x(i) - x;
        const double dy = cloud_->y(i) - y;
        if (dx * dx + dy * dy <= r2) out.push_back(i);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

LocalCrop build_crop(const PointCloud& cloud, std::vector<std::size_t> in_radius,
                     const CenterProposal& center, std::size_t k, Rng& rng) {
  LocalCrop crop;
  crop.center = center;
  crop.actual_count = in_radius.size();
  const std::size_t keep = std::min(k, in_radius.size());
  if (in_radius.size() > k) {
    for (std::size_t i = 0; i < keep; ++i) {
      const std::size_t j = i + uniform_index(rng, in_radius.size() - i);
      std::swap(in_radius[i], in_radius[j]);
    }
  }
  crop.points.resize(keep, cloud.stride());
  for (std::size_t r = 0; r < keep; ++r) {
    const auto rec = cloud.record(in_radius[r]);
    auto row = crop.points.row(r);
    row[0] = rec[0] - center.x;
    row[1] = rec[1] - center.y;
    row[2] = rec[2] - center.z;
    std::copy(rec.begin() + 3, rec.end(), row.begin() + 3);
  }
  return crop;
}

void check_crop_args(double radius, std::size_t k) {
  if (!(radius > 0)) throw Error(ErrorCode::kInvalidArgument, "crop radius must be > 0");
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "crop size k must be >= 1");
}

}  // namespace

LocalCrop crop_neighborhood(const PointCloud& cloud, const CenterProposal& center, double radius,
                            std::size_t k, Rng& rng) {
  check_crop_args(radius, k);
  std::vector<std::size_t> in_radius;
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double dx = cloud.x(i) - center.x;
    const double dy = cloud.y(i) - center.y;
    if (dx * dx + dy * dy <= r2) in_radius.push_back(i);
  }
  return build_crop(cloud, std::move(in_radius), center, k, rng);
}

LocalCrop crop_neighborhood(const PointCloud& cloud, const NeighborIndex& index,
                            const CenterProposal& center, double radius, std::size_t k,
                            Rng& rng) {
  check_crop_args(radius, k);
  return build_crop(cloud, index.query(center.x, center.y, radius), center, k, rng);
}

CropBatch make_batch(std::span<const LocalCrop> crops) {
  CropBatch batch;
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (const LocalCrop& c : crops) {
    rows += c.points.rows();
    if (c.points.rows() > 0) {
      if (cols != 0 && cols != c.points.cols()) {
        throw Error(ErrorCode::kShapeMismatch, "make_batch: crops disagree on point width");
      }
      cols = c.points.cols();
    }
  }
  batch.points.resize(rows, cols);
  batch.offsets.reserve(crops.size() + 1);
  std::size_t at = 0;
  for (const LocalCrop& c : crops) {
    std::copy(c.points.storage().begin(), c.points.storage().end(),
              batch.points.storage().begin() + static_cast<std::ptrdiff_t>(at * cols));
    at += c.points.rows();
    batch.offsets.push_back(at);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Parameters

std::size_t FeaturizerConfig::output_dim() const {
  return std::accumulate(block_widths.begin(), block_widths.end(), std::size_t{0});
}

void validate(const FeaturizerConfig& config) {
  if (config.input_dim < 3) throw Error(ErrorCode::kConfig, "featurizer.input_dim must be >= 3");
  if (config.block_widths.empty()) throw Error(ErrorCode::kConfig, "featurizer.block_widths is empty");
  for (std::size_t w : config.block_widths) {
    if (w == 0) throw Error(ErrorCode::kConfig, "featurizer.block_widths entries must be > 0");
  }
  if (!(config.bn_momentum >= 0 && config.bn_momentum < 1)) {
    throw Error(ErrorCode::kConfig, "featurizer.bn_momentum must be in [0, 1)");
  }
  if (!(config.bn_epsilon > 0)) throw Error(ErrorCode::kConfig, "featurizer.bn_epsilon must be > 0");
}

namespace {

Param random_weight(std::size_t in, std::size_t out, Rng& rng) {
  Param p(in, out);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  for (double& v : p.value.storage()) v = dist(rng);
  return p;
}

LayerParams make_layer(std::size_t in, std::size_t out, Rng& rng) {
  LayerParams l;
  l.gamma = Param(1, in, 1.0);
  l.beta = Param(1, in, 0.0);
  l.weight = random_weight(in, out, rng);
  l.running_mean.assign(in, 0.0);
  l.running_var.assign(in, 1.0);
  return l;
}

}  // namespace

FeaturizerParams init_featurizer(const FeaturizerConfig& config, Rng& rng) {
  validate(config);
  FeaturizerParams p;
  p.config = config;
  p.embed = random_weight(config.input_dim, config.block_widths[0], rng);
  std::size_t w_in = config.block_widths[0];
  for (std::size_t w_out : config.block_widths) {
    BlockParams b;
    b.width_in = w_in;
    b.width_out = w_out;
    b.layers[0] = make_layer(2 * w_in, w_out, rng);
    b.layers[1] = make_layer(w_out, w_out, rng);
    p.blocks.push_back(std::move(b));
    w_in = w_out;
  }
  return p;
}

void FeaturizerParams::collect(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers) {
  params.push_back({"featurizer.embed", &embed});
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t l = 0; l < 2; ++l) {
      const std::string prefix = "featurizer.block" + std::to_string(b) + ".fc" + std::to_string(l);
      LayerParams& layer = blocks[b].layers[l];
      params.push_back({prefix + ".bn_gamma", &layer.gamma});
      params.push_back({prefix + ".bn_beta", &layer.beta});
      params.push_back({prefix + ".weight", &layer.weight});
      buffers.push_back({prefix + ".bn_running_mean", &layer.running_mean});
      buffers.push_back({prefix + ".bn_running_var", &layer.running_var});
    }
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

// Column statistics over rows, where row r of `x` is repeated weights[r] times
// (all ones when weights is empty).
void column_stats(const Matrix& x, std::span<const std::size_t> weights, double total,
                  std::size_t col0, BnStats& stats, std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) {
    double sum = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double w = weights.empty() ? 1.0 : static_cast<double>(weights[r]);
      sum += w * x(r, j);
    }
    const double mean = sum / total;
    double sq = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double w = weights.empty() ? 1.0 : static_cast<double>(weights[r]);
      const double d = x(r, j) - mean;
      sq += w * d * d;
    }
    stats.mean[col0 + j] = mean;
    stats.var[col0 + j] = sq / total;
  }
}

BnStats running_stats(const LayerParams& layer, double eps, std::size_t begin, std::size_t count) {
  BnStats s;
  s.mean.assign(layer.running_mean.begin() + begin, layer.running_mean.begin() + begin + count);
  s.var.assign(layer.running_var.begin() + begin, layer.running_var.begin() + begin + count);
  s.inv_std.resize(count);
  for (std::size_t j = 0; j < count; ++j) s.inv_std[j] = 1.0 / std::sqrt(s.var[j] + eps);
  return s;
}

// xhat = (x - mean) * inv_std; y = gamma * xhat + beta (gamma/beta from col0).
void normalize(const Matrix& x, const BnStats& s, const LayerParams& layer, std::size_t col0,
               Matrix& xhat, Matrix& y) {
  const std::size_t cols = x.cols();
  xhat.resize(x.rows(), cols);
  y.resize(x.rows(), cols);
  const double* g = layer.gamma.value.data() + col0;
  const double* b = layer.beta.value.data() + col0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* xr = x.data() + r * cols;
    double* hr = xhat.data() + r * cols;
    double* yr = y.data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      hr[j] = (xr[j] - s.mean[j]) * s.inv_std[j];
      yr[j] = g[j] * hr[j] + b[j];
    }
  }
}

void relu_inplace(Matrix& m) {
  for (double& v : m.storage()) v = v > 0.0 ? v : 0.0;
}

Matrix affine(const Matrix& xhat, const LayerParams& layer, std::size_t col0) {
  Matrix y(xhat.rows(), xhat.cols());
  const double* g = layer.gamma.value.data() + col0;
  const double* b = layer.beta.value.data() + col0;
  for (std::size_t r = 0; r < xhat.rows(); ++r) {
    for (std::size_t j = 0; j < xhat.cols(); ++j) y(r, j) = g[j] * xhat(r, j) + b[j];
  }
  return y;
}

// Batch-norm backward for a train-mode layer. dy: gradient w.r.t. the BN
// output, already summed over duplicate rows. Returns dx (per distinct row).
Matrix bn_backward(const Matrix& dy, const Matrix& xhat, std::span<const std::size_t> weights,
                   double total, const BnStats& s, LayerParams& layer, std::size_t col0) {
  const std::size_t rows = xhat.rows();
  const std::size_t cols = xhat.cols();
  const double* g = layer.gamma.value.data() + col0;
  double* dg = layer.gamma.grad.data() + col0;
  double* db = layer.beta.grad.data() + col0;
  std::vector<double> sum_dxhat(cols, 0.0), sum_dxhat_xhat(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = dy(r, j);
      dg[j] += d * xhat(r, j);
      db[j] += d;
      const double dxh = d * g[j];
      sum_dxhat[j] += dxh;
      sum_dxhat_xhat[j] += dxh * xhat(r, j);
    }
  }
  Matrix dx(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double w = weights.empty() ? 1.0 : static_cast<double>(weights[r]);
    for (std::size_t j = 0; j < cols; ++j) {
      const double dxh = dy(r, j) * g[j];
      dx(r, j) = s.inv_std[j] *
                 (dxh - w * sum_dxhat[j] / total - w * xhat(r, j) * sum_dxhat_xhat[j] / total);
    }
  }
  return dx;
}

std::vector<std::size_t> crop_sizes(std::span<const std::size_t> offsets) {
  std::vector<std::size_t> sizes(offsets.size() - 1);
  for (std::size_t c = 0; c + 1 < offsets.size(); ++c) sizes[c] = offsets[c + 1] - offsets[c];
  return sizes;
}

}  // namespace

BlockOutput block_forward(const Matrix& features, std::span<const std::size_t> offsets,
                          const BlockParams& params, Mode mode, double bn_epsilon,
                          BlockTape* tape) {
  const std::size_t n = features.rows();
  const std::size_t crops = offsets.size() - 1;
  const std::size_t wi = params.width_in;
  const std::size_t wo = params.width_out;
  if (features.cols() != wi || offsets.back() != n) {
    throw Error(ErrorCode::kShapeMismatch, "block_forward: input does not match block width");
  }
  const auto& k = kernels::active_kernels();
  const auto sizes = crop_sizes(offsets);

  // Max over each crop's points.
  Matrix mx(crops, wi);
  std::vector<std::uint32_t> argmax(crops * wi, 0);
  for (std::size_t c = 0; c < crops; ++c) {
    if (sizes[c] == 0) continue;
    k.segment_max(features.data() + offsets[c] * wi, sizes[c], wi, wi, mx.row(c).data(),
                  argmax.data() + c * wi);
    for (std::size_t j = 0; j < wi; ++j) argmax[c * wi + j] += static_cast<std::uint32_t>(offsets[c]);
  }

  const LayerParams& l1 = params.layers[0];
  const LayerParams& l2 = params.layers[1];
  BnStats s_points, s_max, s2;
  const double total = static_cast<double>(n);
  if (mode == Mode::kTrain && n > 0) {
    s_points = {std::vector<double>(wi), std::vector<double>(wi), std::vector<double>(wi)};
    s_max = s_points;
    column_stats(features, {}, total, 0, s_points, wi);
    column_stats(mx, sizes, total, 0, s_max, wi);
    for (std::size_t j = 0; j < wi; ++j) {
      s_points.inv_std[j] = 1.0 / std::sqrt(s_points.var[j] + bn_epsilon);
      s_max.inv_std[j] = 1.0 / std::sqrt(s_max.var[j] + bn_epsilon);
    }
  } else {
    s_points = running_stats(l1, bn_epsilon, 0, wi);
    s_max = running_stats(l1, bn_epsilon, wi, wi);
  }

  Matrix xhat, xs, mhat, ms;
  normalize(features, s_points, l1, 0, xhat, xs);
  normalize(mx, s_max, l1, wi, mhat, ms);

  const double* w1 = l1.weight.value.data();
  Matrix hidden(n, wo);
  gemm(xs, MatView(w1, wi, wo, wo), hidden, false);
  Matrix mproj(crops, wo);
  gemm(ms, MatView(w1 + wi * wo, wi, wo, wo), mproj, false);
  for (std::size_t c = 0; c < crops; ++c) {
    for (std::size_t r = offsets[c]; r < offsets[c + 1]; ++r) {
      double* hr = hidden.data() + r * wo;
      const double* mr = mproj.data() + c * wo;
      for (std::size_t j = 0; j < wo; ++j) hr[j] += mr[j];
    }
  }
  relu_inplace(hidden);

  if (mode == Mode::kTrain && n > 0) {
    s2 = {std::vector<double>(wo), std::vector<double>(wo), std::vector<double>(wo)};
    column_stats(hidden, {}, total, 0, s2, wo);
    for (std::size_t j = 0; j < wo; ++j) s2.inv_std[j] = 1.0 / std::sqrt(s2.var[j] + bn_epsilon);
  } else {
    s2 = running_stats(l2, bn_epsilon, 0, wo);
  }
  Matrix hhat, hs;
  normalize(hidden, s2, l2, 0, hhat, hs);

  BlockOutput out;
  out.out.resize(n, wo);
  gemm(hs, l2.weight.value, out.out, false);
  relu_inplace(out.out);

  out.readout.resize(crops, wo);
  for (std::size_t c = 0; c < crops; ++c) {
    if (sizes[c] == 0) continue;
    double* rr = out.readout.row(c).data();
    for (std::size_t r = offsets[c]; r < offsets[c + 1]; ++r) {
      const double* o = out.out.data() + r * wo;
      for (std::size_t j = 0; j < wo; ++j) rr[j] += o[j];
    }
    const double inv = 1.0 / static_cast<double>(sizes[c]);
    for (std::size_t j = 0; j < wo; ++j) rr[j] *= inv;
  }

  if (tape) {
    tape->argmax = std::move(argmax);
    tape->bn1_points = std::move(s_points);
    tape->bn1_max = std::move(s_max);
    tape->xhat = std::move(xhat);
    tape->mhat = std::move(mhat);
    tape->hidden = std::move(hidden);
    tape->bn2 = std::move(s2);
    tape->hhat = std::move(hhat);
    tape->out = out.out;
  }
  return out;
}

Matrix block_backward(const BlockTape& tape, std::span<const std::size_t> offsets,
                      BlockParams& params, const Matrix& d_out, const Matrix& d_readout) {
  const std::size_t n = tape.out.rows();
  const std::size_t crops = offsets.size() - 1;
  const std::size_t wi = params.width_in;
  const std::size_t wo = params.width_out;
  if (d_out.rows() != n || d_out.cols() != wo || d_readout.rows() != crops ||
      d_readout.cols() != wo) {
    throw Error(ErrorCode::kShapeMismatch, "block_backward: gradient shape mismatch");
  }
  const auto sizes = crop_sizes(offsets);
  const double total = static_cast<double>(n);
  LayerParams& l1 = params.layers[0];
  LayerParams& l2 = params.layers[1];

  // Through the readout mean and the output ReLU.
  Matrix g2 = d_out;
  for (std::size_t c = 0; c < crops; ++c) {
    if (sizes[c] == 0) continue;
    const double inv = 1.0 / static_cast<double>(sizes[c]);
    for (std::size_t r = offsets[c]; r < offsets[c + 1]; ++r) {
      for (std::size_t j = 0; j < wo; ++j) g2(r, j) += d_readout(c, j) * inv;
    }
  }
  for (std::size_t i = 0; i < g2.size(); ++i) {
    if (!(tape.out.storage()[i] > 0.0)) g2.storage()[i] = 0.0;
  }

  // Second layer.
  const Matrix hs = affine(tape.hhat, l2, 0);
  gemm_tn(hs, g2, l2.weight.grad, true);
  Matrix d_hs;
  matmul(g2, transpose(l2.weight.value), d_hs);
  Matrix d_hidden = bn_backward(d_hs, tape.hhat, {}, total, tape.bn2, l2, 0);
  for (std::size_t i = 0; i < d_hidden.size(); ++i) {
    if (!(tape.hidden.storage()[i] > 0.0)) d_hidden.storage()[i] = 0.0;
  }

  // First layer: point part and broadcast max part.
  const double* w1 = l1.weight.value.data();
  double* dw1 = l1.weight.grad.data();
  const Matrix xs = affine(tape.xhat, l1, 0);
  const Matrix ms = affine(tape.mhat, l1, wi);
  gemm_tn(xs, d_hidden, MutMatView(dw1, wi, wo, wo), true);
  Matrix crop_sum(crops, wo);
  for (std::size_t c = 0; c < crops; ++c) {
    for (std::size_t r = offsets[c]; r < offsets[c + 1]; ++r) {
      for (std::size_t j = 0; j < wo; ++j) crop_sum(c, j) += d_hidden(r, j);
    }
  }
  gemm_tn(ms, crop_sum, MutMatView(dw1 + wi * wo, wi, wo, wo), true);

  Matrix wa_t(wo, wi), wb_t(wo, wi);
  for (std::size_t i = 0; i < wi; ++i) {
    for (std::size_t j = 0; j < wo; ++j) {
      wa_t(j, i) = w1[i * wo + j];
      wb_t(j, i) = w1[(wi + i) * wo + j];
    }
  }
  Matrix d_xs, d_ms;
  matmul(d_hidden, wa_t, d_xs);
  matmul(crop_sum, wb_t, d_ms);

  Matrix d_in = bn_backward(d_xs, tape.xhat, {}, total, tape.bn1_points, l1, 0);
  const Matrix d_max = bn_backward(d_ms, tape.mhat, sizes, total, tape.bn1_max, l1, wi);
  for (std::size_t c = 0; c < crops; ++c) {
    if (sizes[c] == 0) continue;
    for (std::size_t j = 0; j < wi; ++j) d_in(tape.argmax[c * wi + j], j) += d_max(c, j);
  }
  return d_in;
}

FeaturizerOutput featurize(const CropBatch& batch, const FeaturizerParams& params, Mode mode,
                           FeaturizerTape* tape) {
  const FeaturizerConfig& cfg = params.config;
  const std::size_t crops = batch.num_crops();
  const std::size_t n = batch.points.rows();
  FeaturizerOutput out;
  out.cell_features.resize(crops, cfg.output_dim());
  out.empty.resize(crops);
  for (std::size_t c = 0; c < crops; ++c) out.empty[c] = batch.crop_size(c) == 0;
  if (tape) {
    tape->params = &params;
    tape->mode = mode;
    tape->input = batch.points;
    tape->offsets = batch.offsets;
    tape->blocks.assign(params.blocks.size(), {});
  }
  if (n == 0) return out;
  if (batch.points.cols() != cfg.input_dim) {
    throw Error(ErrorCode::kShapeMismatch,
                "featurize: points have " + std::to_string(batch.points.cols()) +
                    " columns, model expects " + std::to_string(cfg.input_dim));
  }
  Matrix h;
  matmul(batch.points, params.embed.value, h);
  std::size_t col = 0;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    BlockOutput bo = block_forward(h, batch.offsets, params.blocks[b], mode, cfg.bn_epsilon,
                                   tape ? &tape->blocks[b] : nullptr);
    const std::size_t wo = params.blocks[b].width_out;
    for (std::size_t c = 0; c < crops; ++c) {
      std::copy(bo.readout.row(c).begin(), bo.readout.row(c).end(),
                out.cell_features.row(c).begin() + static_cast<std::ptrdiff_t>(col));
    }
    col += wo;
    h = std::move(bo.out);
  }
  return out;
}

Matrix featurizer_backward(const FeaturizerTape& tape, FeaturizerParams& params,
                           const Matrix& upstream) {
  if (tape.params != &params || tape.blocks.size() != params.blocks.size()) {
    throw Error(ErrorCode::kShapeMismatch, "featurizer_backward: tape was recorded for other params");
  }
  if (tape.mode != Mode::kTrain) {
    throw Error(ErrorCode::kInvalidArgument, "featurizer_backward: tape is not from a train pass");
  }
  const std::size_t crops = tape.offsets.size() - 1;
  const std::size_t n = tape.input.rows();
  if (upstream.rows() != crops || upstream.cols() != params.config.output_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "featurizer_backward: upstream gradient shape mismatch");
  }
  if (n == 0) return Matrix(0, tape.input.cols());
  std::size_t col = params.config.output_dim();
  Matrix d_h(n, params.blocks.back().width_out);
  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    const std::size_t wo = params.blocks[b].width_out;
    col -= wo;
    Matrix d_readout(crops, wo);
    for (std::size_t c = 0; c < crops; ++c) {
      for (std::size_t j = 0; j < wo; ++j) d_readout(c, j) = upstream(c, col + j);
    }
    d_h = block_backward(tape.blocks[b], tape.offsets, params.blocks[b], d_h, d_readout);
  }
  gemm_tn(tape.input, d_h, params.embed.grad, true);
  Matrix d_input;
  matmul(d_h, transpose(params.embed.value), d_input);
  return d_input;
}

void update_running_stats(FeaturizerParams& params, const FeaturizerTape& tape) {
  if (tape.mode != Mode::kTrain || tape.input.rows() == 0) return;
  const double m = params.config.bn_momentum;
  auto blend = [m](std::vector<double>& running, const std::vector<double>& batch, std::size_t at) {
    for (std::size_t j = 0; j < batch.size(); ++j) {
      running[at + j] = m * running[at + j] + (1.0 - m) * batch[j];
    }
  };
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const BlockTape& t = tape.blocks[b];
    LayerParams& l1 = params.blocks[b].layers[0];
    LayerParams& l2 = params.blocks[b].layers[1];
    const std::size_t wi = params.blocks[b].width_in;
    blend(l1.running_mean, t.bn1_points.mean, 0);
    blend(l1.running_var, t.bn1_points.var, 0);
    blend(l1.running_mean, t.bn1_max.mean, wi);
    blend(l1.running_var, t.bn1_max.var, wi);
    blend(l2.running_mean, t.bn2.mean, 0);
    blend(l2.running_var, t.bn2.var, 0);
  }
}

std::uint64_t featurizer_macs(const FeaturizerConfig& config, std::size_t points) {
  if (points == 0 || config.block_widths.empty()) return 0;
  const std::uint64_t p = points;
  std::uint64_t macs = p * config.input_dim * config.block_widths[0];
  std::uint64_t wi = config.block_widths[0];
  for (std::size_t w : config.block_widths) {
    const std::uint64_t wo = w;
    macs += p * wi * wo;  // point half of the first layer
    macs += wi * wo;      // crop-max half, once per crop
    macs += p * wo * wo;  // second layer
    wi = wo;
  }
  return macs;
}

}  // namespace starnet
