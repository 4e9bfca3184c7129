#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "starnet/eval.hpp"
#include "starnet/model.hpp"
#include "starnet/pipeline.hpp"
#include "starnet/scene.hpp"

namespace starnet {

// Frame file: magic "STARNETF", u32 version, u32 feature_dim, u64 frame
// count, then per frame: u64 id, f64 timestamp, f32 pose (tx, ty, yaw),
// u32 feature_dim, u64 point count, f32 records, u32 label count,
// labels of 7 f32 + i32 class. Little-endian throughout.
inline constexpr std::uint32_t kFrameFormatVersion = 1;

void write_frames(std::span<const Frame> frames, std::size_t feature_dim,
                  const std::filesystem::path& path);
void write_frames(std::span<const Frame> frames, std::size_t feature_dim, std::ostream& out);
std::vector<Frame> read_frames(const std::filesystem::path& path);
std::vector<Frame> read_frames(std::istream& in);

// Everything a CLI run can configure.
struct RunConfig {
  SceneGenConfig scene = default_scene_config();
  ModelConfig model = default_model_config();
  TrainConfig train;
  InferenceConfig inference;
  EvalConfig eval;
  std::uint64_t seed = 1;
};

// Parses a JSON document. Unknown keys and invalid values throw kConfig with
// the offending key path in the message.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// Columns: experiment, class, bucket, num_centers, points_per_crop, flops, AP, APH, coverage.
struct MetricRow {
  std::string experiment;
  std::string class_name;
  std::string bucket;
  std::optional<std::size_t> num_centers;
  std::optional<std::size_t> points_per_crop;
  std::optional<std::uint64_t> flops;
  std::optional<double> ap;
  std::optional<double> aph;
  std::optional<double> coverage;
};

void write_metrics_csv(std::span<const MetricRow> rows, std::ostream& out);

// Columns: frame_id, class, score, cx, cy, cz, length, width, height, heading.
void write_detections_csv(std::span<const Frame> frames,
                          std::span<const std::vector<Detection>> detections, std::ostream& out);
std::vector<std::vector<Detection>> read_detections_csv(std::istream& in,
                                                        std::span<const Frame> frames);

}  // namespace starnet
