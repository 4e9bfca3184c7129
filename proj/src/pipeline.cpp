#include "starnet/pipeline.hpp"

#include <limits>
#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "starnet/error.hpp"

namespace starnet {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&](std::size_t w) {
    const std::size_t lo = n * w / workers;
    const std::size_t hi = n * (w + 1) / workers;
    try {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(run, w);
  run(0);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void validate(const TrainConfig& c) {
  if (!(c.lr0 > 0.0 && std::isfinite(c.lr0))) throw Error(ErrorCode::kConfig, "train.lr0 must be positive");
  if (!(c.lr_decay > 0.0 && c.lr_decay <= 1.0)) throw Error(ErrorCode::kConfig, "train.lr_decay must be in (0, 1]");
  if (c.epochs == 0) throw Error(ErrorCode::kConfig, "train.epochs must be >= 1");
  if (c.batch_frames == 0) throw Error(ErrorCode::kConfig, "train.batch_frames must be >= 1");
  if (c.centers_per_frame == 0) throw Error(ErrorCode::kConfig, "train.centers_per_frame must be >= 1");
  if (c.points_per_crop == 0) throw Error(ErrorCode::kConfig, "train.points_per_crop must be >= 1");
  if (c.workers == 0) throw Error(ErrorCode::kConfig, "train.workers must be >= 1");
  if (!(c.loss.cls_weight >= 0.0 && c.loss.loc_weight >= 0.0)) {
    throw Error(ErrorCode::kConfig, "train.loss weights must be nonnegative");
  }
  if (!(c.matching.background_iou <= c.matching.foreground_iou)) {
    throw Error(ErrorCode::kConfig, "train.matching: background_iou must not exceed foreground_iou");
  }
  validate_range(c.z_range);
}

void validate(const InferenceConfig& c) {
  if (c.num_centers == 0) throw Error(ErrorCode::kConfig, "inference.num_centers must be >= 1");
  if (c.temporal_seed_count > c.num_centers) {
    throw Error(ErrorCode::kConfig, "inference.temporal_seed_count must not exceed num_centers");
  }
  if (c.points_per_crop == 0) throw Error(ErrorCode::kConfig, "inference.points_per_crop must be >= 1");
  if (!(c.min_score >= 0.0 && c.min_score <= 1.0)) {
    throw Error(ErrorCode::kConfig, "inference.min_score must be in [0, 1]");
  }
  if (!(c.nms_iou > 0.0 && c.nms_iou < 1.0)) throw Error(ErrorCode::kConfig, "inference.nms_iou must be in (0, 1)");
  if (c.max_detections == 0) throw Error(ErrorCode::kConfig, "inference.max_detections must be >= 1");
  if (c.workers == 0) throw Error(ErrorCode::kConfig, "inference.workers must be >= 1");
  if (c.chunk_size == 0) throw Error(ErrorCode::kConfig, "inference.chunk_size must be >= 1");
  validate_range(c.z_range);
}

std::uint64_t crop_seed_for(const InferenceConfig& config, std::uint64_t frame_id) {
  return mix_seed(mix_seed(config.seed, frame_id), 0x63726f70);
}

namespace {

void check_feature_dim(const PointCloud& cloud, const Model& model) {
  if (cloud.feature_dim() != model.config().feature_dim) {
    throw Error(ErrorCode::kFeatureDimMismatch,
                "point cloud has " + std::to_string(cloud.feature_dim()) +
                    " features per point, model expects " + std::to_string(model.config().feature_dim));
  }
}

// Crops, anchors and targets for one training frame.
struct FrameSamples {
  std::vector<LocalCrop> crops;
  Assignment assignment;
};

FrameSamples sample_frame(const Frame& frame, const Model& model, const TrainConfig& config,
                          std::uint64_t seed) {
  check_feature_dim(frame.cloud, model);
  const ModelConfig& mc = model.config();
  Rng rng(seed);
  const auto centers =
      select_centers(frame.cloud, config.z_range, config.sampler, config.centers_per_frame, {}, rng);
  FrameSamples out;
  if (centers.empty()) return out;
  const NeighborIndex index(frame.cloud, mc.crop_radius);
  std::vector<Anchor> anchors;
  anchors.reserve(centers.size() * mc.anchors.anchors_per_center());
  for (const CenterProposal& c : centers) {
    out.crops.push_back(crop_neighborhood(frame.cloud, index, c, mc.crop_radius, config.points_per_crop, rng));
    const auto a = build_anchors(c, mc.anchors);
    anchors.insert(anchors.end(), a.begin(), a.end());
  }
  out.assignment = assign_targets(anchors, frame.labels, config.matching);
  return out;
}

}  // namespace

LossBreakdown train_step(Model& model, std::span<const Frame* const> frames, const TrainConfig& config,
                         AdamState& adam, double lr, Rng& rng) {
  std::vector<std::uint64_t> seeds(frames.size());
  for (auto& s : seeds) s = rng();
  std::vector<FrameSamples> samples(frames.size());
  parallel_for(frames.size(), config.workers,
               [&](std::size_t f) { samples[f] = sample_frame(*frames[f], model, config, seeds[f]); });

  std::vector<LocalCrop> crops;
  Assignment assignment;
  for (FrameSamples& s : samples) {
    std::move(s.crops.begin(), s.crops.end(), std::back_inserter(crops));
    const Assignment& a = s.assignment;
    assignment.labels.insert(assignment.labels.end(), a.labels.begin(), a.labels.end());
    assignment.matched.insert(assignment.matched.end(), a.matched.begin(), a.matched.end());
    assignment.targets.insert(assignment.targets.end(), a.targets.begin(), a.targets.end());
    assignment.num_foreground += a.num_foreground;
  }
  if (crops.empty()) return {};

  model.zero_grad();
  const CropBatch batch = make_batch(crops);
  FeaturizerTape ftape;
  const FeaturizerOutput feats = featurize(batch, model.featurizer(), Mode::kTrain, &ftape);
  HeadTape htape;
  const HeadOutput out = head_forward(feats.cell_features, feats.empty, model.head(), &htape);
  Matrix d_cls;
  Matrix d_reg;
  const LossBreakdown loss = total_loss(out, assignment, feats.empty, config.loss, &d_cls, &d_reg);
  if (!std::isfinite(loss.total)) {
    throw Error(ErrorCode::kNumerical, "training loss became non-finite at optimizer step " +
                                           std::to_string(adam.step + 1));
  }
  const Matrix d_features = head_backward(htape, model.head(), d_cls, d_reg);
  featurizer_backward(ftape, model.featurizer(), d_features);
  update_running_stats(model.featurizer(), ftape);
  adam_step(model.parameters(), adam, lr);
  return loss;
}

std::vector<TrainLogEntry> train(Model& model, std::span<const Frame> frames, const TrainConfig& config,
                                 const TrainHooks& hooks) {
  validate(config);
  if (frames.empty()) throw Error(ErrorCode::kEmptyInput, "train: no frames");
  const std::size_t steps_per_epoch = (frames.size() + config.batch_frames - 1) / config.batch_frames;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const LrSchedule schedule{config.lr0, config.lr_decay,
                            config.decay_steps == 0 ? total_steps : config.decay_steps};
  AdamState adam = make_adam_state(model.parameters(), config.adam);
  Rng rng(config.seed);
  std::vector<std::size_t> order(frames.size());
  std::vector<TrainLogEntry> log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<const Frame*> batch;
      for (std::size_t i = b * config.batch_frames; i < std::min(frames.size(), (b + 1) * config.batch_frames); ++i) {
        batch.push_back(&frames[order[i]]);
      }
      TrainLogEntry entry;
      entry.step = step;
      entry.lr = schedule.at(step);
      entry.loss = train_step(model, batch, config, adam, entry.lr, rng);
      ++step;
      if (!hooks.validation_frames.empty() && config.validate_every > 0 &&
          (step % config.validate_every == 0 || step == total_steps)) {
        std::vector<std::vector<Detection>> dets;
        for (const Frame& f : hooks.validation_frames) dets.push_back(detect(f, model, hooks.validation_inference));
        const auto evals = make_frame_evals(hooks.validation_frames, dets);
        entry.validation_ap = range_bucketed_eval(evals, hooks.validation_eval, 0).front().ap;
      }
      if (hooks.on_step) hooks.on_step(entry);
      log.push_back(entry);
    }
  }
  return log;
}

namespace {

// A seed sits at a box center rather than on a point; crops are re-centered
// on the height of the nearest eligible point so they look like sampled ones.
void borrow_seed_heights(const PointCloud& cloud, const ZRange& range, std::vector<CenterProposal>& seeds) {
  const IndexSet eligible = z_filter(cloud, range);
  if (eligible.empty()) return;
  for (CenterProposal& seed : seeds) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i : eligible) {
      const double dx = cloud.x(i) - seed.x;
      const double dy = cloud.y(i) - seed.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        seed.z = cloud.z(i);
      }
    }
  }
}

}  // namespace

std::vector<CenterProposal> detection_centers(const Frame& frame, const InferenceConfig& config,
                                              const PreviousFrame* prev) {
  std::vector<CenterProposal> seeds;
  if (prev != nullptr && config.temporal_seed_count > 0) {
    std::vector<ScoredBox> scored;
    scored.reserve(prev->detections.size());
    for (const Detection& d : prev->detections) scored.push_back({d.box, d.score});
    seeds = temporal_seeds(scored, prev->pose_delta, config.temporal_seed_count);
    borrow_seed_heights(frame.cloud, config.z_range, seeds);
  }
  Rng rng(mix_seed(config.seed, frame.frame_id));
  return select_centers(frame.cloud, config.z_range, config.sampler, config.num_centers, seeds, rng);
}

std::vector<Detection> detect_at_centers(const PointCloud& cloud, std::span<const CenterProposal> centers,
                                         const Model& model, const InferenceConfig& config,
                                         std::uint64_t crop_seed) {
  validate(config);
  check_feature_dim(cloud, model);
  if (cloud.empty() || centers.empty()) return {};
  const ModelConfig& mc = model.config();
  const NeighborIndex index(cloud, mc.crop_radius);
  const std::size_t chunks = (centers.size() + config.chunk_size - 1) / config.chunk_size;
  std::vector<std::vector<Detection>> found(chunks);
  parallel_for(chunks, config.workers, [&](std::size_t chunk) {
    const std::size_t lo = chunk * config.chunk_size;
    const std::size_t hi = std::min(centers.size(), lo + config.chunk_size);
    std::vector<LocalCrop> crops;
    crops.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng(mix_seed(crop_seed, i));
      crops.push_back(crop_neighborhood(cloud, index, centers[i], mc.crop_radius, config.points_per_crop, rng));
    }
    const FeaturizerOutput feats = featurize(make_batch(crops), model.featurizer(), Mode::kInfer);
    const HeadOutput out = head_forward(feats.cell_features, feats.empty, model.head());
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t cell = i - lo;
      if (feats.empty[cell]) continue;
      const auto anchors = build_anchors(centers[i], mc.anchors);
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        const double score = sigmoid(out.cls(cell, a));
        if (score < config.min_score) continue;
        Residual r;
        for (std::size_t k = 0; k < 7; ++k) r[k] = out.reg(cell, 7 * a + k);
        found[chunk].push_back({decode_residuals(r, anchors[a].box), score, anchors[a].class_id});
      }
    }
  });
  std::vector<Detection> all;
  for (auto& f : found) all.insert(all.end(), f.begin(), f.end());
  return oriented_nms(all, config.nms_iou, config.max_detections);
}

std::vector<Detection> detect(const Frame& frame, const Model& model, const InferenceConfig& config,
                              const PreviousFrame* prev) {
  validate(config);
  check_feature_dim(frame.cloud, model);
  if (frame.cloud.empty()) return {};
  const auto centers = detection_centers(frame, config, prev);
  return detect_at_centers(frame.cloud, centers, model, config, crop_seed_for(config, frame.frame_id));
}

std::vector<std::vector<Detection>> detect_sequence(std::span<const Frame> frames, const Model& model,
                                                    const InferenceConfig& config) {
  std::vector<std::vector<Detection>> out;
  out.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (f == 0) {
      out.push_back(detect(frames[f], model, config));
      continue;
    }
    PreviousFrame prev{out.back(), relative_pose(frames[f - 1].pose, frames[f].pose)};
    out.push_back(detect(frames[f], model, config, &prev));
  }
  return out;
}

FlopEstimate flops_estimate(const ModelConfig& model, const InferenceConfig& inference,
                            std::size_t eligible_points) {
  FlopEstimate e;
  e.featurizer_per_crop = featurizer_macs(model.featurizer, inference.points_per_crop);
  e.head_per_crop = head_macs(model.featurizer.output_dim(), model.anchors);
  e.per_center = e.featurizer_per_crop + e.head_per_crop;
  e.model_total = e.per_center * inference.num_centers;
  if (eligible_points > 0 && inference.sampler == SamplerKind::kFps) {
    // Two squared-difference multiply-adds per eligible point per pick.
    e.sampling = 2ULL * eligible_points * inference.num_centers;
  }
  return e;
}

std::vector<FrameEval> make_frame_evals(std::span<const Frame> frames,
                                        std::span<const std::vector<Detection>> detections) {
  if (frames.size() != detections.size()) {
    throw Error(ErrorCode::kShapeMismatch, "make_frame_evals: one detection list per frame required");
  }
  std::vector<FrameEval> out(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out[i].detections = detections[i];
    out[i].labels = frames[i].labels;
    out[i].label_point_counts = label_point_counts(frames[i]);
  }
  return out;
}

std::vector<SweepRow> sweep(const Model& model, std::span<const std::size_t> center_counts,
                            std::span<const std::size_t> point_counts, std::span<const Frame> frames,
                            const InferenceConfig& base, const EvalConfig& eval, int class_id) {
  std::vector<SweepRow> rows;
  for (std::size_t k : point_counts) {
    for (std::size_t n : center_counts) {
      InferenceConfig cfg = base;
      cfg.num_centers = n;
      cfg.points_per_crop = k;
      cfg.temporal_seed_count = std::min(cfg.temporal_seed_count, n);
      std::vector<std::vector<Detection>> dets;
      dets.reserve(frames.size());
      for (const Frame& f : frames) dets.push_back(detect(f, model, cfg));
      const auto result = range_bucketed_eval(make_frame_evals(frames, dets), eval, class_id).front();
      rows.push_back({n, k, flops_estimate(model.config(), cfg).model_total, result.ap, result.aph});
    }
  }
  return rows;
}

std::vector<CoverageRow> coverage_experiment(std::span<const Frame> frames, const AnchorConfig& anchors,
                                             const ZRange& z_range, SamplerKind sampler,
                                             std::span<const std::size_t> center_counts, std::uint64_t seed,
                                             std::size_t min_points, double iou) {
  std::vector<std::size_t> qualifying(frames.size(), 0);
  std::vector<std::vector<Box3D>> gt_boxes(frames.size());
  std::vector<std::vector<std::size_t>> gt_counts(frames.size());
  std::size_t total = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    gt_counts[f] = label_point_counts(frames[f]);
    for (std::size_t g = 0; g < frames[f].labels.size(); ++g) {
      gt_boxes[f].push_back(frames[f].labels[g].box);
      if (gt_counts[f][g] >= min_points) ++qualifying[f];
    }
    total += qualifying[f];
  }
  if (total == 0) throw Error(ErrorCode::kEmptyInput, "coverage_experiment: no objects with enough points");

  std::vector<CoverageRow> rows;
  for (std::size_t n : center_counts) {
    std::size_t covered = 0;
    for (std::size_t f = 0; f < frames.size(); ++f) {
      if (qualifying[f] == 0) continue;
      // Same stream for every count, so smaller proposal sets are prefixes.
      Rng rng(mix_seed(seed, frames[f].frame_id));
      const auto centers = select_centers(frames[f].cloud, z_range, sampler, n, {}, rng);
      std::vector<Box3D> boxes;
      for (const CenterProposal& c : centers) {
        for (const Anchor& a : build_anchors(c, anchors)) boxes.push_back(a.box);
      }
      const double frac = coverage(gt_boxes[f], gt_counts[f], boxes, min_points, iou);
      covered += static_cast<std::size_t>(std::llround(frac * static_cast<double>(qualifying[f])));
    }
    rows.push_back({sampler, n, static_cast<double>(covered) / static_cast<double>(total)});
  }
  return rows;
}

const char* sampler_name(SamplerKind kind) { return kind == SamplerKind::kFps ? "fps" : "random"; }

SamplerKind parse_sampler(const std::string& name) {
  if (name == "fps") return SamplerKind::kFps;
  if (name == "random") return SamplerKind::kRandom;
  throw Error(ErrorCode::kConfig, "unknown sampler '" + name + "' (expected fps or random)");
}

}  // namespace starnet
