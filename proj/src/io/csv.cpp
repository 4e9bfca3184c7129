#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "starnet/error.hpp"
#include "starnet/io.hpp"

namespace starnet {

namespace {

std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

template <typename T>
std::string opt(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) {
    return fmt(*v, "%.6f");
  } else {
    return std::to_string(*v);
  }
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw Error(ErrorCode::kBadFormat, "detections csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

void write_metrics_csv(std::span<const MetricRow> rows, std::ostream& out) {
  out << "experiment,class,bucket,num_centers,points_per_crop,flops,AP,APH,coverage\n";
  for (const MetricRow& r : rows) {
    out << r.experiment << ',' << r.class_name << ',' << r.bucket << ',' << opt(r.num_centers) << ','
        << opt(r.points_per_crop) << ',' << opt(r.flops) << ',' << opt(r.ap) << ',' << opt(r.aph) << ','
        << opt(r.coverage) << '\n';
  }
}

void write_detections_csv(std::span<const Frame> frames, std::span<const std::vector<Detection>> detections,
                          std::ostream& out) {
  if (frames.size() != detections.size()) {
    throw Error(ErrorCode::kShapeMismatch, "write_detections_csv: one detection list per frame required");
  }
  out << "frame_id,class,score,cx,cy,cz,length,width,height,heading\n";
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const Detection& d : detections[f]) {
      const Box3D& b = d.box;
      out << frames[f].frame_id << ',' << d.class_id;
      for (double v : {d.score, b.cx, b.cy, b.cz, b.length, b.width, b.height, b.heading}) {
        out << ',' << fmt(v, "%.17g");
      }
      out << '\n';
    }
  }
}

std::vector<std::vector<Detection>> read_detections_csv(std::istream& in, std::span<const Frame> frames) {
  std::map<std::uint64_t, std::size_t> slot;
  for (std::size_t f = 0; f < frames.size(); ++f) slot[frames[f].frame_id] = f;
  std::vector<std::vector<Detection>> out(frames.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) {
      throw Error(ErrorCode::kBadFormat, "detections csv line " + std::to_string(line_no) + ": expected 10 columns");
    }
    const auto frame_id = static_cast<std::uint64_t>(parse_double(cells[0], line_no));
    auto it = slot.find(frame_id);
    if (it == slot.end()) {
      throw Error(ErrorCode::kBadFormat, "detections csv line " + std::to_string(line_no) + ": unknown frame id");
    }
    Detection d;
    d.class_id = static_cast<int>(parse_double(cells[1], line_no));
    d.score = parse_double(cells[2], line_no);
    Box3D& b = d.box;
    double* fields[7] = {&b.cx, &b.cy, &b.cz, &b.length, &b.width, &b.height, &b.heading};
    for (std::size_t k = 0; k < 7; ++k) *fields[k] = parse_double(cells[3 + k], line_no);
    out[it->second].push_back(d);
  }
  return out;
}

}  // namespace starnet
