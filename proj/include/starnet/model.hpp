#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "starnet/featurizer.hpp"
#include "starnet/head.hpp"

namespace starnet {

struct ModelConfig {
  FeaturizerConfig featurizer;
  AnchorConfig anchors;
  double crop_radius = 2.0;
  std::size_t feature_dim = 1;
};

void validate(const ModelConfig& config);

// Anchors and crop radius sized for pedestrian-like objects.
ModelConfig default_model_config();

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  FeaturizerParams& featurizer() { return featurizer_; }
  const FeaturizerParams& featurizer() const { return featurizer_; }
  HeadParams& head() { return head_; }
  const HeadParams& head() const { return head_; }

  // Pointers stay valid as long as the model is not moved.
  std::vector<NamedParam> parameters();
  std::vector<NamedBuffer> buffers();

  void zero_grad();

 private:
  ModelConfig config_;
  FeaturizerParams featurizer_;
  HeadParams head_;
};

std::uint64_t config_hash(const ModelConfig& config);

// Binary checkpoint: little-endian, magic "STARNETC", format version, config
// document, config hash, then named tensors.
void save_checkpoint(Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace starnet
