// Command-line front end: gen, train, detect, eval, coverage, sweep, flops.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "starnet/error.hpp"
#include "starnet/io.hpp"
#include "starnet/pipeline.hpp"

namespace {

using namespace starnet;

struct Options {
  std::string config;
  std::string frames;
  std::string out;
  std::string checkpoint;
  std::string detections;
  std::string log;
  std::string sampler;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> num_frames;
  std::size_t sequence_length = 0;
  std::vector<std::size_t> num_centers;
  std::vector<std::size_t> points;
  std::optional<std::size_t> temporal_seeds;
};

RunConfig load_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
    c.inference.seed = *o.seed;
  }
  if (o.workers) {
    c.train.workers = *o.workers;
    c.inference.workers = *o.workers;
  }
  if (!o.sampler.empty()) {
    c.inference.sampler = parse_sampler(o.sampler);
  }
  if (o.num_centers.size() == 1) c.inference.num_centers = o.num_centers.front();
  if (o.points.size() == 1) c.inference.points_per_crop = o.points.front();
  if (o.temporal_seeds) c.inference.temporal_seed_count = *o.temporal_seeds;
  validate(c.inference);
  return c;
}

// Writes to the named file, or stdout when the name is empty or "-".
template <typename Fn>
void with_output(const std::string& path, Fn fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  fn(out);
}

std::vector<Frame> require_frames(const Options& o) {
  if (o.frames.empty()) throw Error(ErrorCode::kInvalidArgument, "--frames is required");
  return read_frames(o.frames);
}

int cmd_gen(const Options& o) {
  const RunConfig c = load_config(o);
  const std::size_t n = o.num_frames.value_or(10);
  Rng rng(c.seed);
  std::vector<Frame> frames;
  while (frames.size() < n) {
    if (o.sequence_length >= 2) {
      for (Frame& f : generate_sequence(c.scene, o.sequence_length, rng)) {
        if (frames.size() < n) frames.push_back(std::move(f));
      }
    } else {
      frames.push_back(generate_scene(c.scene, rng));
    }
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i].frame_id = i;
  }
  if (o.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
  write_frames(frames, c.scene.feature_dim, o.out);
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig c = load_config(o);
  const auto frames = require_frames(o);
  if (o.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
  Model model(c.model, c.seed);
  std::ofstream log_file;
  if (!o.log.empty()) {
    log_file.open(o.log);
    if (!log_file) throw Error(ErrorCode::kIo, "cannot open " + o.log);
  }
  std::ostream& log = o.log.empty() ? std::cerr : log_file;
  TrainHooks hooks;
  hooks.on_step = [&](const TrainLogEntry& e) {
    log << "step=" << e.step << " lr=" << e.lr << " loss=" << e.loss.total << " cls=" << e.loss.classification
        << " loc=" << e.loss.localization << " fg=" << e.loss.num_foreground;
    if (e.validation_ap) log << " val_ap=" << *e.validation_ap;
    log << '\n';
  };
  train(model, frames, c.train, hooks);
  save_checkpoint(model, o.out);
  return 0;
}

std::vector<std::vector<Detection>> run_detect(const std::vector<Frame>& frames, const Model& model,
                                               const InferenceConfig& cfg, std::size_t sequence_length) {
  std::vector<std::vector<Detection>> dets;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const bool starts = sequence_length < 2 || i % sequence_length == 0;
    if (starts) {
      dets.push_back(detect(frames[i], model, cfg));
    } else {
      PreviousFrame prev{dets.back(), relative_pose(frames[i - 1].pose, frames[i].pose)};
      dets.push_back(detect(frames[i], model, cfg, &prev));
    }
  }
  return dets;
}

Model require_model(const Options& o) {
  if (o.checkpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "--checkpoint is required");
  return load_checkpoint(o.checkpoint);
}

int cmd_detect(const Options& o) {
  const RunConfig c = load_config(o);
  const auto frames = require_frames(o);
  const Model model = require_model(o);
  const auto dets = run_detect(frames, model, c.inference, o.sequence_length);
  with_output(o.out, [&](std::ostream& out) { write_detections_csv(frames, dets, out); });
  return 0;
}

std::vector<MetricRow> bucket_rows(const std::string& experiment, const std::vector<BucketResult>& results) {
  std::vector<MetricRow> rows;
  for (const BucketResult& r : results) {
    MetricRow row;
    row.experiment = experiment;
    row.class_name = "0";
    row.bucket = r.bucket;
    row.ap = r.ap;
    row.aph = r.aph;
    rows.push_back(row);
  }
  return rows;
}

int cmd_eval(const Options& o) {
  const RunConfig c = load_config(o);
  const auto frames = require_frames(o);
  std::vector<std::vector<Detection>> dets;
  if (!o.detections.empty()) {
    std::ifstream in(o.detections);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + o.detections);
    dets = read_detections_csv(in, frames);
  } else {
    dets = run_detect(frames, require_model(o), c.inference, o.sequence_length);
  }
  const auto results = range_bucketed_eval(make_frame_evals(frames, dets), c.eval, 0);
  auto rows = bucket_rows("eval", results);
  for (MetricRow& r : rows) {
    r.num_centers = c.inference.num_centers;
    r.points_per_crop = c.inference.points_per_crop;
  }
  with_output(o.out, [&](std::ostream& out) { write_metrics_csv(rows, out); });
  return 0;
}

int cmd_coverage(const Options& o) {
  const RunConfig c = load_config(o);
  const auto frames = require_frames(o);
  const std::vector<std::size_t> counts =
      o.num_centers.empty() ? std::vector<std::size_t>{64, 128, 256, 512} : o.num_centers;
  const auto result = coverage_experiment(frames, c.model.anchors, c.inference.z_range, c.inference.sampler, counts,
                                          c.seed, c.eval.min_points);
  std::vector<MetricRow> rows;
  for (const CoverageRow& r : result) {
    MetricRow row;
    row.experiment = std::string("coverage_") + sampler_name(r.sampler);
    row.class_name = "0";
    row.bucket = "overall";
    row.num_centers = r.num_centers;
    row.coverage = r.coverage;
    rows.push_back(row);
  }
  with_output(o.out, [&](std::ostream& out) { write_metrics_csv(rows, out); });
  return 0;
}

int cmd_sweep(const Options& o) {
  const RunConfig c = load_config(o);
  const auto frames = require_frames(o);
  const Model model = require_model(o);
  const std::vector<std::size_t> centers =
      o.num_centers.empty() ? std::vector<std::size_t>{64, 128, 256, 512, 1024} : o.num_centers;
  const std::vector<std::size_t> points =
      o.points.empty() ? std::vector<std::size_t>{c.inference.points_per_crop} : o.points;
  std::vector<MetricRow> rows;
  for (const SweepRow& r : sweep(model, centers, points, frames, c.inference, c.eval)) {
    MetricRow row;
    row.experiment = "sweep";
    row.class_name = "0";
    row.bucket = "overall";
    row.num_centers = r.num_centers;
    row.points_per_crop = r.points_per_crop;
    row.flops = r.flops;
    row.ap = r.ap;
    row.aph = r.aph;
    rows.push_back(row);
  }
  with_output(o.out, [&](std::ostream& out) { write_metrics_csv(rows, out); });
  return 0;
}

int cmd_flops(const Options& o) {
  const RunConfig c = load_config(o);
  const ModelConfig model = o.checkpoint.empty() ? c.model : load_checkpoint(o.checkpoint).config();
  const std::vector<std::size_t> centers =
      o.num_centers.empty() ? std::vector<std::size_t>{c.inference.num_centers} : o.num_centers;
  const std::vector<std::size_t> points =
      o.points.empty() ? std::vector<std::size_t>{c.inference.points_per_crop} : o.points;
  std::vector<MetricRow> rows;
  for (std::size_t k : points) {
    for (std::size_t n : centers) {
      InferenceConfig inf = c.inference;
      inf.num_centers = n;
      inf.points_per_crop = k;
      MetricRow row;
      row.experiment = "flops";
      row.class_name = "0";
      row.bucket = "overall";
      row.num_centers = n;
      row.points_per_crop = k;
      row.flops = flops_estimate(model, inf).model_total;
      rows.push_back(row);
    }
  }
  with_output(o.out, [&](std::ostream& out) { write_metrics_csv(rows, out); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud object detector with sampled proposals"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Seed overriding the config");
    sub->add_option("--workers", o.workers, "Worker threads");
    sub->add_option("--out", o.out, "Output path (CSV outputs default to stdout)");
  };
  auto frames_opt = [&o](CLI::App* sub) {
    sub->add_option("--frames", o.frames, "Frame file")->check(CLI::ExistingFile);
  };
  auto inference_opts = [&o](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
    sub->add_option("--num-centers", o.num_centers, "Proposal count")->delimiter(',');
    sub->add_option("--points", o.points, "Points per crop")->delimiter(',');
    sub->add_option("--sampler", o.sampler, "fps or random")->check(CLI::IsMember({"fps", "random"}));
    sub->add_option("--temporal-seeds", o.temporal_seeds, "Centers seeded from the previous frame");
    sub->add_option("--sequence-length", o.sequence_length, "Frames per sequence (temporal seeding)");
  };

  auto* gen = app.add_subcommand("gen", "Generate synthetic frames");
  common(gen);
  gen->add_option("--frames", o.num_frames, "Number of frames");
  gen->add_option("--sequence-length", o.sequence_length, "Frames per sequence; 0 for independent scenes");

  auto* tr = app.add_subcommand("train", "Train a model");
  common(tr);
  frames_opt(tr);
  tr->add_option("--log", o.log, "Per-step log file (default stderr)");

  auto* det = app.add_subcommand("detect", "Run detection and write a detections CSV");
  common(det);
  frames_opt(det);
  inference_opts(det);

  auto* ev = app.add_subcommand("eval", "AP/APH per range bucket");
  common(ev);
  frames_opt(ev);
  inference_opts(ev);
  ev->add_option("--detections", o.detections, "Detections CSV (otherwise runs detect)")->check(CLI::ExistingFile);

  auto* cov = app.add_subcommand("coverage", "Proposal coverage per center count");
  common(cov);
  frames_opt(cov);
  inference_opts(cov);

  auto* sw = app.add_subcommand("sweep", "AP over center and point counts");
  common(sw);
  frames_opt(sw);
  inference_opts(sw);
  sw->add_option("--centers", o.num_centers, "Center counts")->delimiter(',');

  auto* fl = app.add_subcommand("flops", "Analytic multiply-add count");
  common(fl);
  inference_opts(fl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*tr) return cmd_train(o);
    if (*det) return cmd_detect(o);
    if (*ev) return cmd_eval(o);
    if (*cov) return cmd_coverage(o);
    if (*sw) return cmd_sweep(o);
    if (*fl) return cmd_flops(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", error_code_name(e.code()), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
