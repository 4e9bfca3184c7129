#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "starnet/eval.hpp"
#include "starnet/head.hpp"
#include "starnet/model.hpp"
#include "starnet/optim.hpp"
#include "starnet/postprocess.hpp"
#include "starnet/sampling.hpp"
#include "starnet/scene.hpp"

namespace starnet {

// Runs fn(i) for i in [0, n) on `workers` threads, contiguous chunks each.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct TrainConfig {
  double lr0 = 1e-3;
  double lr_decay = 0.01;        // fraction of lr0 reached after decay_steps
  std::size_t decay_steps = 0;   // 0: the whole run
  std::size_t epochs = 8;
  std::size_t batch_frames = 4;
  std::size_t centers_per_frame = 128;
  std::size_t points_per_crop = 32;
  SamplerKind sampler = SamplerKind::kFps;
  ZRange z_range{0.3, std::numeric_limits<double>::infinity()};
  LossConfig loss;
  MatchingConfig matching;
  AdamConfig adam;
  std::size_t validate_every = 500;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

void validate(const TrainConfig& config);

struct InferenceConfig {
  std::size_t num_centers = 1024;
  std::size_t points_per_crop = 32;
  SamplerKind sampler = SamplerKind::kFps;
  std::size_t temporal_seed_count = 0;
  double min_score = 0.1;
  double nms_iou = 0.5;
  std::size_t max_detections = 512;
  ZRange z_range{0.3, std::numeric_limits<double>::infinity()};
  std::uint64_t seed = 7;
  std::size_t workers = 1;
  std::size_t chunk_size = 64;  // crops featurized per batch
};

void validate(const InferenceConfig& config);

struct TrainLogEntry {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
  std::optional<double> validation_ap;
};

struct TrainHooks {
  std::function<void(const TrainLogEntry&)> on_step;
  // Validation frames/config; validation runs every validate_every steps.
  std::span<const Frame> validation_frames;
  InferenceConfig validation_inference;
  EvalConfig validation_eval;
};

// Trains `model` in place. Throws kNumerical if the loss becomes non-finite.
std::vector<TrainLogEntry> train(Model& model, std::span<const Frame> frames,
                                 const TrainConfig& config, const TrainHooks& hooks = {});

// One optimization step on a batch of frames; exposed for tests.
LossBreakdown train_step(Model& model, std::span<const Frame* const> frames,
                         const TrainConfig& config, AdamState& adam, double lr, Rng& rng);

struct PreviousFrame {
  std::vector<Detection> detections;
  Pose2D pose_delta;  // previous vehicle frame -> current vehicle frame
};

// Seeds (when prev is given) followed by sampler output.
std::vector<CenterProposal> detection_centers(const Frame& frame, const InferenceConfig& config,
                                              const PreviousFrame* prev = nullptr);

// Seed of the crop sampling stream detect() uses for a frame.
std::uint64_t crop_seed_for(const InferenceConfig& config, std::uint64_t frame_id);

std::vector<Detection> detect_at_centers(const PointCloud& cloud,
                                         std::span<const CenterProposal> centers,
                                         const Model& model, const InferenceConfig& config,
                                         std::uint64_t crop_seed);

std::vector<Detection> detect(const Frame& frame, const Model& model,
                              const InferenceConfig& config,
                              const PreviousFrame* prev = nullptr);

// Detects every frame of a sequence, seeding each from its predecessor.
std::vector<std::vector<Detection>> detect_sequence(std::span<const Frame> frames,
                                                    const Model& model,
                                                    const InferenceConfig& config);

struct FlopEstimate {
  std::uint64_t featurizer_per_crop = 0;
  std::uint64_t head_per_crop = 0;
  std::uint64_t per_center = 0;
  std::uint64_t model_total = 0;  // per_center * num_centers
  std::uint64_t sampling = 0;     // FPS distance updates (multiply-adds)
};

// Multiply-add counts. Sampling is counted only when eligible_points > 0.
FlopEstimate flops_estimate(const ModelConfig& model, const InferenceConfig& inference,
                            std::size_t eligible_points = 0);

std::vector<FrameEval> make_frame_evals(std::span<const Frame> frames,
                                        std::span<const std::vector<Detection>> detections);

struct SweepRow {
  std::size_t num_centers = 0;
  std::size_t points_per_crop = 0;
  std::uint64_t flops = 0;
  double ap = 0.0;
  double aph = 0.0;
};

std::vector<SweepRow> sweep(const Model& model, std::span<const std::size_t> center_counts,
                            std::span<const std::size_t> point_counts,
                            std::span<const Frame> frames, const InferenceConfig& base,
                            const EvalConfig& eval, int class_id = 0);

struct CoverageRow {
  SamplerKind sampler = SamplerKind::kFps;
  std::size_t num_centers = 0;
  double coverage = 0.0;
};

// Pooled coverage over all frames for each proposal count.
std::vector<CoverageRow> coverage_experiment(std::span<const Frame> frames,
                                             const AnchorConfig& anchors,
                                             const ZRange& z_range, SamplerKind sampler,
                                             std::span<const std::size_t> center_counts,
                                             std::uint64_t seed, std::size_t min_points = 5,
                                             double iou = 0.5);

const char* sampler_name(SamplerKind kind);
SamplerKind parse_sampler(const std::string& name);

}  // namespace starnet
