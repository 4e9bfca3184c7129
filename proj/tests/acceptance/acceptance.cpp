// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "starnet/error.hpp"
#include "starnet/io.hpp"
#include "starnet/model.hpp"
#include "starnet/pipeline.hpp"
#include "starnet/scene.hpp"

namespace {

using namespace starnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  fs::path workdir = "acceptance_work";
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::string checkpoint;  // reuse instead of training (criteria 5-7, 9)
  std::vector<int> only;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- 1 ---------------------------------------------------------------------

Outcome geometry_oracles() {
  std::mt19937_64 g(2024);
  std::uniform_real_distribution<double> pos(-3, 3), dim(0.5, 5), ang(-kPi, kPi), near(-1.5, 1.5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Box3D a{pos(g), pos(g), 0, dim(g), dim(g), 1, ang(g)};
    const Box3D b{a.cx + near(g), a.cy + near(g), 0, dim(g), dim(g), 1, ang(g)};
    const double mc = oracle::monte_carlo_bev_iou(a, b, 1'000'000, 77 + i);
    worst = std::max(worst, std::abs(bev_iou(a, b) - mc));
  }
  const Box3D unit{0, 0, 0, 2, 1, 1, 0};
  Box3D half = unit;
  half.cx = 1.0;  // overlap 1 of union 3
  Box3D far = unit;
  far.cx = 10.0;
  const double e_third = std::abs(bev_iou(unit, half) - 1.0 / 3.0);
  const double e_disjoint = std::abs(bev_iou(unit, far));
  const double e_same = std::abs(bev_iou(unit, unit) - 1.0);
  Box3D turned = unit;
  turned.heading = 0.7;
  const double e_same_turned = std::abs(bev_iou(turned, turned) - 1.0);
  const double exact = std::max({e_third, e_disjoint, e_same, e_same_turned});
  return {worst <= 1e-2 && exact <= 1e-9,
          "max |iou - monte carlo| " + fmt("%.2e", worst) + " (tol 1e-2), analytic error " + fmt("%.1e", exact) +
              " (tol 1e-9)"};
}

// --- 2 ---------------------------------------------------------------------

constexpr double kGradEps = 1e-4;

// Smallest distance of any ReLU pre-activation or per-channel max runner-up
// from its kink, for a single-crop training tape.
double kink_margin(const FeaturizerTape& t, const FeaturizerParams& p) {
  double m = std::numeric_limits<double>::infinity();
  Matrix h;
  matmul(t.input, p.embed.value, h);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const BlockParams& bp = p.blocks[b];
    const BlockTape& bt = t.blocks[b];
    const std::size_t wi = bp.width_in, wo = bp.width_out;
    for (std::size_t j = 0; j < wi; ++j) {
      double top = -std::numeric_limits<double>::infinity(), second = top;
      for (std::size_t r = 0; r < h.rows(); ++r) {
        const double v = h(r, j);
        if (v > top) {
          second = top;
          top = v;
        } else if (v > second) {
          second = v;
        }
      }
      if (b == 0 || top > 0) m = std::min(m, top - second);
    }
    const LayerParams& l0 = bp.layers[0];
    const LayerParams& l1 = bp.layers[1];
    for (std::size_t r = 0; r < h.rows(); ++r) {
      for (std::size_t o = 0; o < wo; ++o) {
        double z0 = 0.0, z1 = 0.0;
        for (std::size_t j = 0; j < wi; ++j) {
          z0 += (l0.gamma.value.storage()[j] * bt.xhat(r, j) + l0.beta.value.storage()[j]) * l0.weight.value(j, o);
          z0 += (l0.gamma.value.storage()[wi + j] * bt.mhat(0, j) + l0.beta.value.storage()[wi + j]) *
                l0.weight.value(wi + j, o);
        }
        for (std::size_t j = 0; j < wo; ++j) {
          z1 += (l1.gamma.value.storage()[j] * bt.hhat(r, j) + l1.beta.value.storage()[j]) * l1.weight.value(j, o);
        }
        m = std::min({m, std::abs(z0), std::abs(z1)});
      }
    }
    h = bt.out;
  }
  return m;
}

// Smallest nonzero variance seen by a train-mode BN layer. Channels carried
// by a few tiny activations make the loss sharply curved in the weights.
double min_bn_variance(const FeaturizerTape& t) {
  double m = std::numeric_limits<double>::infinity();
  for (const BlockTape& bt : t.blocks) {
    for (double v : bt.bn1_points.var) {
      if (v > 0) m = std::min(m, v);
    }
    for (double v : bt.bn2.var) {
      if (v > 0) m = std::min(m, v);
    }
  }
  return m;
}

// Which side of every ReLU and max each activation sits on.
std::vector<std::uint32_t> kink_pattern(const FeaturizerTape& t) {
  std::vector<std::uint32_t> bits;
  for (const BlockTape& bt : t.blocks) {
    bits.insert(bits.end(), bt.argmax.begin(), bt.argmax.end());
    for (double v : bt.hidden.storage()) bits.push_back(v > 0);
    for (double v : bt.out.storage()) bits.push_back(v > 0);
  }
  return bits;
}

struct GradCase {
  std::unique_ptr<Model> model;
  LocalCrop crop;
};

GradCase make_grad_case(const ModelConfig& cfg, std::uint64_t seed) {
  GradCase c{std::make_unique<Model>(cfg, seed), {}};
  std::mt19937_64 g(seed + 1);
  std::normal_distribution<double> n01(0.0, 1.0);
  // Non-trivial BN affine parameters so every term carries signal.
  for (auto& b : c.model->featurizer().blocks) {
    for (auto& l : b.layers) {
      for (double& v : l.gamma.value.storage()) v = 1.0 + 0.2 * n01(g);
      for (double& v : l.beta.value.storage()) v = 0.2 * n01(g);
    }
  }
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  c.crop.points.resize(16, cfg.featurizer.input_dim);
  for (std::size_t r = 0; r < 16; ++r) {
    c.crop.points(r, 0) = u(g) * 0.5;
    c.crop.points(r, 1) = u(g) * 0.5;
    c.crop.points(r, 2) = 0.9 + u(g) * 0.8;
    c.crop.points(r, 3) = 0.5 + 0.2 * u(g);
  }
  c.crop.actual_count = 16;
  return c;
}

struct GradResult {
  std::size_t checked = 0, failed = 0, kinked = 0;
  double worst = 0.0;
  std::string worst_name;
  bool has_foreground = false;
};

GradResult run_gradient_check(const ModelConfig& cfg, GradCase& c) {
  Model& model = *c.model;
  const CropBatch batch = make_batch(std::vector<LocalCrop>{c.crop});
  const auto anchors = build_anchors(CenterProposal{0, 0, 0.9}, cfg.anchors);
  const std::vector<LabeledBox> gts{{Box3D{0.1, -0.05, 0.85, 0.85, 0.95, 1.7, 0.3}, 0}};
  const Assignment assignment = assign_targets(anchors, gts);
  const std::vector<bool> empty{false};
  const LossConfig lc;

  model.zero_grad();
  FeaturizerTape ftape;
  const Matrix features = featurize(batch, model.featurizer(), Mode::kTrain, &ftape).cell_features;
  HeadTape htape;
  const HeadOutput out = head_forward(features, empty, model.head(), &htape);
  Matrix d_cls, d_reg;
  total_loss(out, assignment, empty, lc, &d_cls, &d_reg);
  const Matrix d_feat = head_backward(htape, model.head(), d_cls, d_reg);
  featurizer_backward(ftape, model.featurizer(), d_feat);
  const auto base_pattern = kink_pattern(ftape);

  auto head_loss = [&](const Matrix& f) {
    return total_loss(head_forward(f, empty, model.head()), assignment, empty, lc).total;
  };
  bool crossed = false;
  auto full_loss = [&]() {
    FeaturizerTape t;
    const double v = head_loss(featurize(batch, model.featurizer(), Mode::kTrain, &t).cell_features);
    crossed = crossed || kink_pattern(t) != base_pattern;
    return v;
  };
  // Head parameters cannot change the cell features, so reuse them.
  auto cached_loss = [&]() { return head_loss(features); };

  GradResult res;
  res.has_foreground = assignment.num_foreground > 0;
  auto check = [&](std::vector<NamedParam> params, const std::function<double()>& loss) {
    for (auto& np : params) {
      auto& values = np.param->value.storage();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double keep = values[i];
        crossed = false;
        values[i] = keep + kGradEps;
        const double up = loss();
        values[i] = keep - kGradEps;
        const double down = loss();
        values[i] = keep;
        const double numeric = (up - down) / (2 * kGradEps);
        const double e = oracle::relative_error(np.param->grad.storage()[i], numeric, 1e-6);
        ++res.checked;
        res.kinked += crossed;
        if (e >= 1e-3) ++res.failed;
        if (e > res.worst) {
          res.worst = e;
          res.worst_name = np.name + "[" + std::to_string(i) + "]";
        }
      }
    }
  };
  std::vector<NamedParam> featurizer_params, head_params;
  std::vector<NamedBuffer> buffers;
  model.featurizer().collect(featurizer_params, buffers);
  model.head().collect(head_params);
  check(featurizer_params, full_loss);
  check(head_params, cached_loss);
  return res;
}

Outcome gradient_check() {
  // Default head; a narrow featurizer keeps the number of ReLU units small
  // enough that some fixed crop has no kink within eps of any perturbation.
  // Central differences across a kink do not estimate the derivative, so a
  // candidate where any perturbation flips an activation is set aside.
  // Candidates with nearly degenerate BN channels are skipped up front.
  ModelConfig cfg = default_model_config();
  cfg.featurizer.block_widths = {10, 10, 10, 14, 14};
  std::vector<std::pair<double, std::uint64_t>> ranked;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    GradCase c = make_grad_case(cfg, seed);
    FeaturizerTape t;
    featurize(make_batch(std::vector<LocalCrop>{c.crop}), c.model->featurizer(), Mode::kTrain, &t);
    if (min_bn_variance(t) < 1e-2) continue;
    ranked.emplace_back(-kink_margin(t, c.model->featurizer()), seed);
  }
  std::sort(ranked.begin(), ranked.end());
  std::size_t tried = 0;
  for (const auto& [neg_margin, seed] : ranked) {
    if (tried == 8) break;
    ++tried;
    GradCase c = make_grad_case(cfg, seed);
    const GradResult r = run_gradient_check(cfg, c);
    if (r.kinked > 0) continue;
    return {r.failed == 0 && r.has_foreground,
            std::to_string(r.checked) + " parameters on crop seed " + std::to_string(seed) + ", " +
                std::to_string(r.failed) + " over 1e-3, worst " + fmt("%.2e", r.worst) + " at " + r.worst_name +
                " (eps 1e-4, floor 1e-6, " + std::to_string(tried - 1) + " candidates set aside for kinks)"};
  }
  return {false, "no kink-free crop among " + std::to_string(tried) + " candidates"};
}

// --- 3 ---------------------------------------------------------------------

Outcome nms_match_oracles() {
  std::mt19937_64 g(33);
  std::uniform_real_distribution<double> pos(-8, 8), dim(0.5, 4), ang(-kPi, kPi), sc(0, 1), jit(-0.7, 0.7);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + g() % 50;
    std::vector<Detection> dets;
    for (std::size_t i = 0; i < n; ++i) {
      dets.push_back({Box3D{pos(g), pos(g), 0, dim(g), dim(g), 1.5, ang(g)}, sc(g), static_cast<int>(g() % 3)});
    }
    const double thr = 0.2 + 0.6 * sc(g);
    const std::size_t cap = 1 + g() % 60;
    const auto a = oriented_nms(dets, thr, cap);
    const auto b = oracle::brute_force_nms(dets, thr, cap);
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i) {
      same = a[i].box == b[i].box && a[i].score == b[i].score && a[i].class_id == b[i].class_id;
    }
    mismatches += !same;

    std::vector<Box3D> gts;
    const std::size_t m = 1 + g() % 50;
    for (std::size_t i = 0; i < m; ++i) gts.push_back(Box3D{pos(g), pos(g), 0.8, dim(g), dim(g), 1.6, ang(g)});
    std::vector<Detection> cand;
    for (std::size_t i = 0; i < n; ++i) {
      const Box3D& near = gts[g() % m];
      cand.push_back({Box3D{near.cx + jit(g), near.cy + jit(g), 0.8 + 0.2 * jit(g), near.length, near.width,
                            near.height, near.heading + jit(g)},
                      sc(g), 0});
    }
    std::stable_sort(cand.begin(), cand.end(), [](const Detection& x, const Detection& y) { return x.score > y.score; });
    const bool use_3d = t % 2 == 0;
    mismatches += match_detections(cand, gts, 0.5, use_3d).matched_gt != oracle::brute_force_match(cand, gts, 0.5, use_3d);
  }
  return {mismatches == 0, "1000 instances x (nms, match), " + std::to_string(mismatches) + " mismatches"};
}

// --- 4 ---------------------------------------------------------------------

Outcome coverage_phenomenon() {
  const SceneGenConfig scene = default_scene_config();
  Rng rng(11);
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < 20; ++i) {
    frames.push_back(generate_scene(scene, rng));
    frames.back().frame_id = i;
  }
  const std::vector<std::size_t> counts{64, 128, 256, 512};
  const InferenceConfig inf;
  const auto fps = coverage_experiment(frames, default_model_config().anchors, inf.z_range, SamplerKind::kFps, counts, 5);
  const auto rnd =
      coverage_experiment(frames, default_model_config().anchors, inf.z_range, SamplerKind::kRandom, counts, 5);
  bool ok = fps.back().coverage >= 0.95;
  std::string detail = "fps/random:";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    ok &= fps[i].coverage >= rnd[i].coverage;
    if (i > 0) ok &= fps[i].coverage >= fps[i - 1].coverage && rnd[i].coverage >= rnd[i - 1].coverage;
    detail += " " + std::to_string(counts[i]) + "=" + fmt("%.3f", fps[i].coverage) + "/" + fmt("%.3f", rnd[i].coverage);
  }
  return {ok, detail + " (fps@512 >= 0.95)"};
}

// --- 5-7, 9 shared state -----------------------------------------------------

std::vector<Frame> make_frames(std::uint64_t seed, std::size_t n, const fs::path& file) {
  const SceneGenConfig scene = default_scene_config();
  Rng rng(seed);
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < n; ++i) {
    frames.push_back(generate_scene(scene, rng));
    frames.back().frame_id = i;
  }
  // Frames go through the file format so runs match the command-line tool.
  write_frames(frames, scene.feature_dim, file);
  return read_frames(file);
}

double ap_of(std::span<const Frame> frames, std::span<const std::vector<Detection>> dets) {
  return range_bucketed_eval(make_frame_evals(frames, dets), EvalConfig{}, 0).front().ap;
}

std::vector<std::vector<Detection>> detect_all(std::span<const Frame> frames, const Model& model,
                                               const InferenceConfig& cfg) {
  std::vector<std::vector<Detection>> out;
  for (const Frame& f : frames) out.push_back(detect(f, model, cfg));
  return out;
}

struct Trained {
  Model model;
  double train_seconds = 0.0;
  bool trained_here = false;
};

Trained obtain_model(const Options& o) {
  Trained t;
  if (!o.checkpoint.empty()) {
    t.model = load_checkpoint(o.checkpoint);
    return t;
  }
  const auto frames = make_frames(1, 500, o.workdir / "train.bin");
  const RunConfig rc;
  TrainConfig tc = rc.train;
  tc.workers = o.workers;
  t.model = Model(rc.model, rc.seed);
  const auto start = Clock::now();
  train(t.model, frames, tc);
  t.train_seconds = seconds_since(start);
  t.trained_here = true;
  save_checkpoint(t.model, o.workdir / "model.ckpt");
  return t;
}

Outcome end_to_end(const Trained& t, std::span<const Frame> val, const Options& o, double& ap_1024) {
  InferenceConfig inf;
  inf.workers = o.workers;
  ap_1024 = ap_of(val, detect_all(val, t.model, inf));
  const bool time_ok = !t.trained_here || t.train_seconds <= 1800.0;
  std::string detail = "AP@0.5 with 1024 centers on 100 held-out frames = " + fmt("%.4f", ap_1024) + " (>= 0.80)";
  detail += t.trained_here ? ", training " + fmt("%.0f", t.train_seconds) + " s (<= 1800)" : ", reused checkpoint";
  return {ap_1024 >= 0.80 && time_ok, detail};
}

Outcome adaptive(const Trained& t, std::span<const Frame> val, const Options& o, double ap_1024) {
  const std::vector<std::size_t> counts{64, 128, 256, 512, 1024};
  std::vector<double> ap;
  for (std::size_t n : counts) {
    if (n == 1024) {
      ap.push_back(ap_1024);
      continue;
    }
    InferenceConfig inf;
    inf.num_centers = n;
    inf.workers = o.workers;
    ap.push_back(ap_of(val, detect_all(val, t.model, inf)));
  }
  std::size_t violations = 0;
  double worst_drop = 0.0;
  for (std::size_t i = 1; i < ap.size(); ++i) {
    if (ap[i] < ap[i - 1]) {
      ++violations;
      worst_drop = std::max(worst_drop, ap[i - 1] - ap[i]);
    }
  }
  const bool ok = violations <= 1 && worst_drop <= 0.01 && ap.back() - ap.front() >= 0.05;
  std::string detail = "AP:";
  for (std::size_t i = 0; i < counts.size(); ++i) detail += " " + std::to_string(counts[i]) + "=" + fmt("%.4f", ap[i]);
  detail += ", " + std::to_string(violations) + " drops (max " + fmt("%.4f", worst_drop) + "), gain " +
            fmt("%.4f", ap.back() - ap.front()) + " (>= 0.05)";
  return {ok, detail};
}

Outcome temporal(const Trained& t, const Options& o) {
  const SceneGenConfig scene = default_scene_config();
  // At 128 centers FPS already covers about 95% of objects on these scenes,
  // leaving nothing for seeds to find; 64 is the scarce-proposal regime.
  constexpr std::size_t kBudget = 64;
  double seeded_sum = 0.0, plain_sum = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(500, s));
    auto frames = generate_sequence(scene, 10, rng);
    for (Frame& f : frames) f.frame_id += 100 * s;
    InferenceConfig plain;
    plain.num_centers = kBudget;
    plain.workers = o.workers;
    InferenceConfig seeded = plain;
    seeded.temporal_seed_count = kBudget / 2;
    plain_sum += ap_of(frames, detect_sequence(frames, t.model, plain));
    seeded_sum += ap_of(frames, detect_sequence(frames, t.model, seeded));
  }
  const double gain = (seeded_sum - plain_sum) / 20.0;
  return {gain >= 0.02, "mean AP over 20 sequences at " + std::to_string(kBudget) + " centers: seeded " +
                            fmt("%.4f", seeded_sum / 20) + " vs unseeded " + fmt("%.4f", plain_sum / 20) + ", gain " +
                            fmt("%.4f", gain) + " (>= 0.02)"};
}

// --- 8 ---------------------------------------------------------------------

Outcome flop_accounting() {
  struct Case {
    std::vector<std::size_t> widths;
    std::size_t grid, proj, centers, points;
  };
  const std::vector<Case> cases{{{64, 64, 64, 96, 96}, 5, 64, 32, 32},
                                {{64, 64, 64, 96, 96}, 5, 64, 17, 64},
                                {{16}, 1, 8, 5, 8},
                                {{32, 48}, 3, 16, 40, 24},
                                {{8, 8, 8}, 4, 4, 64, 1}};
  std::size_t exact = 0;
  bool linear = true;
  std::string detail;
  for (const Case& c : cases) {
    ModelConfig mc = default_model_config();
    mc.featurizer.block_widths = c.widths;
    mc.anchors.grid_size = c.grid;
    mc.anchors.proj_dim = c.proj;
    const Model model(mc, 3);
    InferenceConfig inf;
    inf.num_centers = c.centers;
    inf.points_per_crop = c.points;
    inf.chunk_size = 16;
    // Dense cluster so every crop is filled to points_per_crop.
    PointCloud cloud(1);
    const double feat[] = {0.4};
    for (int i = 0; i < 3000; ++i) cloud.add(0.002 * (i % 50), 0.002 * (i / 50), 1.0, feat);
    const std::vector<CenterProposal> centers(c.centers, CenterProposal{0.05, 0.05, 1.0});
    MacCounter counter;
    detect_at_centers(cloud, centers, model, inf, 9);
    const FlopEstimate e = flops_estimate(mc, inf);
    exact += counter.count() == e.model_total;
    InferenceConfig twice = inf;
    twice.num_centers *= 2;
    linear &= flops_estimate(mc, twice).model_total == 2 * e.model_total && e.model_total == c.centers * e.per_center;
    detail += " " + std::to_string(counter.count()) + "/" + std::to_string(e.model_total);
  }
  return {exact == cases.size() && linear, std::to_string(exact) + "/5 configs exact (counted/estimated:" + detail +
                                               "), linear in num_centers: " + (linear ? "yes" : "no")};
}

// --- 9 ---------------------------------------------------------------------

std::string detections_csv(std::span<const Frame> frames, const Model& model, const InferenceConfig& cfg) {
  std::ostringstream out;
  write_detections_csv(frames, detect_all(frames, model, cfg), out);
  return out.str();
}

Outcome determinism_locality(const Trained& t, std::span<const Frame> val, const Options& o) {
  const auto frames = val.subspan(0, 5);
  InferenceConfig a;
  a.workers = 1;
  InferenceConfig b = a;
  b.workers = std::max<std::size_t>(2, o.workers);
  b.chunk_size = 37;
  const std::string first = detections_csv(frames, t.model, a);
  const bool reproducible = first == detections_csv(frames, t.model, a) && first == detections_csv(frames, t.model, b);

  const double r = t.model.config().crop_radius;
  double worst = 0.0;
  std::size_t compared = 0;
  bool same_count = true;
  for (const Frame& f : frames) {
    const auto centers = detection_centers(f, a);
    const std::uint64_t crop_seed = crop_seed_for(a, f.frame_id);
    const auto full = detect_at_centers(f.cloud, centers, t.model, a, crop_seed);
    PointCloud kept(f.cloud.feature_dim());
    const NeighborIndex index(f.cloud, r);
    std::vector<bool> near(f.cloud.size(), false);
    for (const auto& c : centers) {
      for (std::size_t i : index.query(c.x, c.y, r)) near[i] = true;
    }
    for (std::size_t i = 0; i < f.cloud.size(); ++i) {
      if (near[i]) kept.add(f.cloud.point(i));
    }
    const auto local = detect_at_centers(kept, centers, t.model, a, crop_seed);
    same_count &= full.size() == local.size();
    for (std::size_t i = 0; same_count && i < full.size(); ++i) {
      const Box3D& x = full[i].box;
      const Box3D& y = local[i].box;
      for (double d : {x.cx - y.cx, x.cy - y.cy, x.cz - y.cz, x.length - y.length, x.width - y.width,
                       x.height - y.height, wrap_angle(x.heading - y.heading), full[i].score - local[i].score}) {
        worst = std::max(worst, std::abs(d));
      }
      ++compared;
    }
  }
  const bool ok = reproducible && same_count && worst <= 1e-6 && compared > 0;
  return {ok, std::string("detect CSV bit-identical across runs and worker counts: ") + (reproducible ? "yes" : "no") +
                  "; locality over " + std::to_string(compared) + " detections, max field change " +
                  fmt("%.1e", worst) + " (tol 1e-6)"};
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Acceptance criteria"};
  std::string workdir = o.workdir.string();
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_option("--workers", o.workers, "Worker threads");
  app.add_option("--checkpoint", o.checkpoint, "Reuse a trained checkpoint instead of training")
      ->check(CLI::ExistingFile);
  app.add_option("--only", o.only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  o.workdir = workdir;
  fs::create_directories(o.workdir);

  const std::set<int> selected(o.only.begin(), o.only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };
  std::vector<std::pair<int, Outcome>> results;
  auto run = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto start = Clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s [%d] %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", id, name.c_str(), out.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
    results.emplace_back(id, out);
  };

  run(1, "geometry oracles", geometry_oracles);
  run(2, "gradient check", gradient_check);
  run(3, "nms and matching oracles", nms_match_oracles);
  run(4, "proposal coverage", coverage_phenomenon);
  run(8, "flop accounting", flop_accounting);

  if (wanted(5) || wanted(6) || wanted(7) || wanted(9)) {
    Trained trained;
    std::vector<Frame> val;
    std::string setup_error;
    try {
      trained = obtain_model(o);
      val = make_frames(2, 100, o.workdir / "val.bin");
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    auto guarded = [&](const std::function<Outcome()>& fn) {
      return [&, fn] { return setup_error.empty() ? fn() : Outcome{false, "setup failed: " + setup_error}; };
    };
    double ap_1024 = 0.0;
    run(5, "end-to-end training", guarded([&] { return end_to_end(trained, val, o, ap_1024); }));
    run(6, "adaptive computation", guarded([&] {
          if (!wanted(5)) {
            InferenceConfig inf;
            inf.workers = o.workers;
            ap_1024 = ap_of(val, detect_all(val, trained.model, inf));
          }
          return adaptive(trained, val, o, ap_1024);
        }));
    run(7, "temporal seeding", guarded([&] { return temporal(trained, o); }));
    run(9, "determinism and locality", guarded([&] { return determinism_locality(trained, val, o); }));
  }

  std::size_t failed = 0;
  for (const auto& [id, out] : results) failed += !out.pass;
  std::printf("%zu/%zu criteria passed\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}
