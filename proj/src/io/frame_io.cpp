#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "starnet/error.hpp"
#include "starnet/io.hpp"

namespace starnet {

static_assert(std::endian::native == std::endian::little, "frame I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'R', 'N', 'E', 'T', 'F'};
constexpr std::uint64_t kMaxRecords = 1ULL << 32;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::kTruncated, "frame file: unexpected end of data");
  return v;
}

void put_f32(std::ostream& out, double v) { put(out, static_cast<float>(v)); }
double get_f32(std::istream& in) { return static_cast<double>(get<float>(in)); }

}  // namespace

void write_frames(std::span<const Frame> frames, std::size_t feature_dim, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put(out, kFrameFormatVersion);
  put(out, static_cast<std::uint32_t>(feature_dim));
  put(out, static_cast<std::uint64_t>(frames.size()));
  for (const Frame& f : frames) {
    if (f.cloud.feature_dim() != feature_dim) {
      throw Error(ErrorCode::kFeatureDimMismatch, "write_frames: frame " + std::to_string(f.frame_id) +
                                                      " has a different feature_dim than the file");
    }
    put(out, f.frame_id);
    put(out, f.timestamp);
    put_f32(out, f.pose.tx);
    put_f32(out, f.pose.ty);
    put_f32(out, f.pose.yaw);
    put(out, static_cast<std::uint32_t>(feature_dim));
    put(out, static_cast<std::uint64_t>(f.cloud.size()));
    for (double v : f.cloud.raw()) put_f32(out, v);
    put(out, static_cast<std::uint32_t>(f.labels.size()));
    for (const LabeledBox& l : f.labels) {
      const Box3D& b = l.box;
      for (double v : {b.cx, b.cy, b.cz, b.length, b.width, b.height, b.heading}) put_f32(out, v);
      put(out, static_cast<std::int32_t>(l.class_id));
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "write_frames: stream write failed");
}

void write_frames(std::span<const Frame> frames, std::size_t feature_dim, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  write_frames(frames, feature_dim, out);
}

std::vector<Frame> read_frames(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in) throw Error(ErrorCode::kTruncated, "frame file: missing header");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kBadFormat, "frame file: bad magic");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kFrameFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch, "frame file: unsupported version " + std::to_string(version));
  }
  const auto feature_dim = get<std::uint32_t>(in);
  const auto count = get<std::uint64_t>(in);
  if (count > kMaxRecords) throw Error(ErrorCode::kBadFormat, "frame file: implausible frame count");
  std::vector<Frame> frames;
  for (std::uint64_t i = 0; i < count; ++i) {
    Frame f;
    f.frame_id = get<std::uint64_t>(in);
    f.timestamp = get<double>(in);
    f.pose.tx = get_f32(in);
    f.pose.ty = get_f32(in);
    f.pose.yaw = get_f32(in);
    const auto frame_dim = get<std::uint32_t>(in);
    if (frame_dim != feature_dim) {
      throw Error(ErrorCode::kFeatureDimMismatch, "frame file: frame " + std::to_string(f.frame_id) +
                                                      " declares feature_dim " + std::to_string(frame_dim) +
                                                      ", header says " + std::to_string(feature_dim));
    }
    const auto points = get<std::uint64_t>(in);
    if (points > kMaxRecords) throw Error(ErrorCode::kBadFormat, "frame file: implausible point count");
    f.cloud = PointCloud(feature_dim);
    auto& raw = f.cloud.raw();
    raw.resize(points * (3 + feature_dim));
    std::vector<float> buf(raw.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::kTruncated, "frame file: truncated point records");
    std::copy(buf.begin(), buf.end(), raw.begin());
    const auto labels = get<std::uint32_t>(in);
    for (std::uint32_t l = 0; l < labels; ++l) {
      LabeledBox lb;
      Box3D& b = lb.box;
      for (double* v : {&b.cx, &b.cy, &b.cz, &b.length, &b.width, &b.height, &b.heading}) *v = get_f32(in);
      lb.class_id = get<std::int32_t>(in);
      f.labels.push_back(lb);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<Frame> read_frames(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_frames(in);
}

}  // namespace starnet
