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

// Re-centered neighborhood of a proposal center: rows are
// (x - cx, y - cy, z - cz, features...).
struct LocalCrop {
  Matrix points;
  CenterProposal center;
  // Points inside the radius before the random cap.
  std::size_t actual_count = 0;
};

// Uniform 2D bucket grid for radius queries over a fixed cloud.
class NeighborIndex {
 public:
  NeighborIndex(const PointCloud& cloud, double cell_size);

  // Indices within `radius` of (x, y) in the x-y plane, ascending.
  std::vector<std::size_t> query(double x, double y, double radius) const;

 private:
  const PointCloud* cloud_;
  double cell_size_;
  double min_x_ = 0.0;
  double min_y_ = 0.0;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> entries_;
};

LocalCrop crop_neighborhood(const PointCloud& cloud, const CenterProposal& center, double radius,
                            std::size_t k, Rng& rng);
LocalCrop crop_neighborhood(const PointCloud& cloud, const NeighborIndex& index,
                            const CenterProposal& center, double radius, std::size_t k,
                            Rng& rng);

// Crops concatenated row-wise; crop c owns rows [offsets[c], offsets[c+1]).
struct CropBatch {
  Matrix points;
  std::vector<std::size_t> offsets{0};

  std::size_t num_crops() const { return offsets.size() - 1; }
  std::size_t crop_size(std::size_t c) const { return offsets[c + 1] - offsets[c]; }
};

CropBatch make_batch(std::span<const LocalCrop> crops);

enum class Mode { kTrain, kInfer };

struct FeaturizerConfig {
  std::size_t input_dim = 4;  // 3 coordinates + sensor features
  std::vector<std::size_t> block_widths{64, 64, 64, 96, 96};
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-5;

  std::size_t output_dim() const;
};

void validate(const FeaturizerConfig& config);

// One BN -> linear -> ReLU layer.
struct LayerParams {
  Param gamma;
  Param beta;
  Param weight;  // in x out
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

// Max-aggregate, concatenate, then two BN/linear/ReLU layers. The first
// layer's input is [point feature | crop max], width 2 * width_in.
struct BlockParams {
  std::size_t width_in = 0;
  std::size_t width_out = 0;
  std::array<LayerParams, 2> layers;
};

struct FeaturizerParams {
  FeaturizerConfig config;
  Param embed;  // input_dim x block_widths[0]
  std::vector<BlockParams> blocks;

  void collect(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers);
};

FeaturizerParams init_featurizer(const FeaturizerConfig& config, Rng& rng);

struct BnStats {
  std::vector<double> mean;
  std::vector<double> inv_std;
  std::vector<double> var;
};

struct BlockTape {
  std::vector<std::uint32_t> argmax; // C x w_in, absolute row index
  BnStats bn1_points;
  BnStats bn1_max;
  Matrix xhat;                       // N x w_in, normalized point part
  Matrix mhat;                       // C x w_in, normalized max part
  Matrix hidden;                     // N x w_out, first layer output
  BnStats bn2;
  Matrix hhat;                       // N x w_out
  Matrix out;                        // N x w_out
};

struct BlockOutput {
  Matrix out;      // N x w_out
  Matrix readout;  // C x w_out, per-crop mean
};

BlockOutput block_forward(const Matrix& features, std::span<const std::size_t> offsets,
                          const BlockParams& params, Mode mode, double bn_epsilon,
                          BlockTape* tape = nullptr);

// Gradient of the block input given gradients of its output and readout.
// Parameter gradients are accumulated into params.
Matrix block_backward(const BlockTape& tape, std::span<const std::size_t> offsets,
                      BlockParams& params, const Matrix& d_out, const Matrix& d_readout);

struct FeaturizerTape {
  const FeaturizerParams* params = nullptr;
  Mode mode = Mode::kInfer;
  Matrix input;
  std::vector<std::size_t> offsets;
  std::vector<BlockTape> blocks;
};

struct FeaturizerOutput {
  Matrix cell_features;     // C x output_dim
  std::vector<bool> empty;  // crops with no points get a zero row
};

FeaturizerOutput featurize(const CropBatch& batch, const FeaturizerParams& params, Mode mode,
                           FeaturizerTape* tape = nullptr);

// Accumulates parameter gradients; returns the gradient w.r.t. batch points.
Matrix featurizer_backward(const FeaturizerTape& tape, FeaturizerParams& params,
                           const Matrix& upstream);

// Folds the batch statistics recorded on a training tape into running stats.
void update_running_stats(FeaturizerParams& params, const FeaturizerTape& tape);

// Multiply-adds of one inference pass over a crop with `points` points.
std::uint64_t featurizer_macs(const FeaturizerConfig& config, std::size_t points);

}  // namespace starnet
