#include "starnet/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "starnet/error.hpp"
#include "starnet/io.hpp"

namespace starnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'R', 'N', 'E', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::kTruncated, "checkpoint: unexpected end of file");
  return v;
}

std::string get_string(std::istream& in, std::uint64_t n) {
  if (n > (1u << 26)) throw Error(ErrorCode::kBadFormat, "checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error(ErrorCode::kTruncated, "checkpoint: unexpected end of file");
  return s;
}

}  // namespace

void validate(const ModelConfig& config) {
  validate(config.featurizer);
  validate(config.anchors);
  if (!(config.crop_radius > 0.0)) throw Error(ErrorCode::kConfig, "model.crop_radius must be positive");
  if (config.featurizer.input_dim != 3 + config.feature_dim) {
    throw Error(ErrorCode::kFeatureDimMismatch,
                "model: featurizer.input_dim must equal 3 + feature_dim");
  }
}

ModelConfig default_model_config() {
  ModelConfig c;
  c.feature_dim = 1;
  c.featurizer.input_dim = 4;
  c.crop_radius = 2.0;
  c.anchors.grid_size = 5;
  c.anchors.grid_extent = 0.6;
  c.anchors.rotations = {0.0, kPi / 2};
  c.anchors.priors = {DimPrior{0.9, 0.9, 1.75, 0.875, 0}};
  c.anchors.proj_dim = 64;
  return c;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  validate(config);
  Rng rng(seed);
  featurizer_ = init_featurizer(config.featurizer, rng);
  head_ = init_head(config.featurizer.output_dim(), config.anchors, rng);
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> buffers;
  featurizer_.collect(params, buffers);
  head_.collect(params);
  return params;
}

std::vector<NamedBuffer> Model::buffers() {
  std::vector<NamedParam> params;
  std::vector<NamedBuffer> buffers;
  featurizer_.collect(params, buffers);
  return buffers;
}

void Model::zero_grad() {
  for (NamedParam& p : parameters()) p.param->zero_grad();
}

std::uint64_t config_hash(const ModelConfig& config) {
  // FNV-1a over the canonical config document.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : model_config_to_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "checkpoint: cannot open " + path.string() + " for writing");
  const std::string doc = model_config_to_json(model.config());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(doc.size()));
  out.write(doc.data(), static_cast<std::streamsize>(doc.size()));
  put(out, config_hash(model.config()));

  const auto params = model.parameters();
  const auto buffers = model.buffers();
  put(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
  auto write_tensor = [&out](const std::string& name, std::uint64_t rows, std::uint64_t cols,
                             const std::vector<double>& data) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, rows);
    put(out, cols);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  };
  for (const NamedParam& p : params) {
    write_tensor(p.name, p.param->value.rows(), p.param->value.cols(), p.param->value.storage());
  }
  for (const NamedBuffer& b : buffers) write_tensor(b.name, 1, b.buffer->size(), *b.buffer);
  if (!out) throw Error(ErrorCode::kIo, "checkpoint: write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in) throw Error(ErrorCode::kTruncated, "checkpoint: file too short");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kBadFormat, "checkpoint: bad magic in " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error(ErrorCode::kVersionMismatch, "checkpoint: unsupported version " + std::to_string(version));
  }
  const ModelConfig config = model_config_from_json(get_string(in, get<std::uint64_t>(in)));
  if (get<std::uint64_t>(in) != config_hash(config)) {
    throw Error(ErrorCode::kBadFormat, "checkpoint: config hash mismatch");
  }
  Model model(config, 0);
  std::map<std::string, std::pair<Matrix*, std::vector<double>*>> slots;
  for (NamedParam& p : model.parameters()) slots[p.name] = {&p.param->value, nullptr};
  for (NamedBuffer& b : model.buffers()) slots[b.name] = {nullptr, b.buffer};
  const auto count = get<std::uint32_t>(in);
  if (count != slots.size()) throw Error(ErrorCode::kBadFormat, "checkpoint: tensor count mismatch");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = get_string(in, get<std::uint32_t>(in));
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    auto it = slots.find(name);
    if (it == slots.end()) throw Error(ErrorCode::kBadFormat, "checkpoint: unknown tensor " + name);
    std::vector<double>* dst = it->second.first ? &it->second.first->storage() : it->second.second;
    const bool shape_ok = it->second.first
                              ? (rows == it->second.first->rows() && cols == it->second.first->cols())
                              : (rows == 1 && cols == dst->size());
    if (!shape_ok) throw Error(ErrorCode::kShapeMismatch, "checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(dst->data()), static_cast<std::streamsize>(dst->size() * sizeof(double)));
    if (!in) throw Error(ErrorCode::kTruncated, "checkpoint: truncated tensor " + name);
    slots.erase(it);
  }
  return model;
}

}  // namespace starnet
