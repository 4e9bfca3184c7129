#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "starnet/error.hpp"
#include "starnet/eval.hpp"

namespace {

using namespace starnet;

Box3D car(double x, double y, double heading = 0.0) { return Box3D{x, y, 0.8, 4.0, 1.8, 1.6, heading}; }

std::vector<double> ranked_scores(std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = 1.0 - 0.01 * static_cast<double>(i);
  return s;
}

TEST(Coverage, Examples) {
  const std::vector<Box3D> gts{car(0, 0), car(10, 3, 0.5), car(-7, 8, 2.0)};
  const std::vector<std::size_t> counts{10, 10, 10};
  EXPECT_DOUBLE_EQ(coverage(gts, counts, gts), 1.0);
  EXPECT_DOUBLE_EQ(coverage(gts, counts, std::vector<Box3D>{}), 0.0);
  EXPECT_DOUBLE_EQ(coverage(gts, counts, std::vector<Box3D>{car(0, 0)}), 1.0 / 3.0);
  const std::vector<std::size_t> sparse{10, 2, 2};
  EXPECT_DOUBLE_EQ(coverage(gts, sparse, std::vector<Box3D>{car(0, 0)}), 1.0);
  const std::vector<std::size_t> none{1, 2, 3};
  EXPECT_THROW(coverage(gts, none, gts), Error);
  EXPECT_THROW(coverage(std::vector<Box3D>{}, std::vector<std::size_t>{}, gts), Error);
}

TEST(Coverage, MonotoneInProposals) {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> pos(-20, 20), ang(-kPi, kPi);
  for (int t = 0; t < 20; ++t) {
    std::vector<Box3D> gts, anchors;
    for (int i = 0; i < 15; ++i) gts.push_back(car(pos(g), pos(g), ang(g)));
    const std::vector<std::size_t> counts(gts.size(), 10);
    double last = 0.0;
    for (int k = 0; k < 200; ++k) {
      anchors.push_back(car(pos(g), pos(g), ang(g)));
      const double c = coverage(gts, counts, anchors);
      EXPECT_GE(c, last);
      last = c;
    }
  }
}

TEST(Matching, Examples) {
  const std::vector<Box3D> gts{car(0, 0), car(10, 0)};
  const std::vector<Detection> perfect{{gts[0], 0.9, 0}, {gts[1], 0.8, 0}};
  const MatchResult all = match_detections(perfect, gts, 0.5);
  EXPECT_EQ(all.true_positive, (std::vector<bool>{true, true}));
  EXPECT_EQ(all.matched_gt, (std::vector<int>{0, 1}));

  const std::vector<Detection> dup{{gts[0], 0.9, 0}, {gts[0], 0.8, 0}};
  const MatchResult d = match_detections(dup, gts, 0.5);
  EXPECT_EQ(d.true_positive, (std::vector<bool>{true, false}));

  const std::vector<Detection> turned{{car(0, 0, kPi), 0.9, 0}, {car(10, 0, -0.25), 0.8, 0}};
  const MatchResult h = match_detections(turned, gts, 0.5);
  EXPECT_NEAR(h.heading_error[0], kPi, 1e-12);
  EXPECT_NEAR(h.heading_error[1], 0.25, 1e-12);
}

TEST(Matching, MatchesBruteForceReference) {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> pos(-8, 8), jitter(-0.6, 0.6), ang(-kPi, kPi), sc(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<Box3D> gts;
    for (int i = 0; i < 20; ++i) gts.push_back(car(pos(g), pos(g), ang(g)));
    std::vector<Detection> dets;
    for (int i = 0; i < 20; ++i) {
      const Box3D& near = gts[static_cast<std::size_t>(i) % gts.size()];
      dets.push_back({car(near.cx + jitter(g), near.cy + jitter(g), near.heading + jitter(g)), sc(g), 0});
    }
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    for (bool use_3d : {true, false}) {
      EXPECT_EQ(match_detections(dets, gts, 0.5, use_3d).matched_gt, oracle::brute_force_match(dets, gts, 0.5, use_3d));
    }
  }
}

TEST(AveragePrecision, Examples) {
  EXPECT_NEAR(average_precision({true, true}, ranked_scores(2), 2), 1.0, 1e-12);
  EXPECT_EQ(average_precision({false, false}, ranked_scores(2), 2), 0.0);
  EXPECT_EQ(average_precision({}, std::vector<double>{}, 3), 0.0);
  const std::vector<bool> tft{true, false, true};
  EXPECT_NEAR(average_precision(tft, ranked_scores(3), 2), oracle::curve_ap({1, 0, 1}, 2), 1e-12);
  // Recall 0.5 at precision 1, recall 1 at precision 2/3.
  EXPECT_NEAR(average_precision(tft, ranked_scores(3), 2), (51 * 1.0 + 50 * 2.0 / 3.0) / 101, 1e-12);
}

TEST(AveragePrecision, HeadingWeightedExamples) {
  const std::vector<bool> tft{true, false, true};
  const auto scores = ranked_scores(3);
  const std::vector<double> zero(3, 0.0);
  EXPECT_NEAR(heading_weighted_ap(tft, zero, scores, 2), average_precision(tft, scores, 2), 1e-15);
  const std::vector<double> flipped(3, kPi);
  EXPECT_EQ(heading_weighted_ap(tft, flipped, scores, 2), 0.0);
  const std::vector<double> mixed{0.0, 0.0, kPi / 2};
  EXPECT_NEAR(heading_weighted_ap(tft, mixed, scores, 2), oracle::curve_ap({1, 0, 0.5}, 2), 1e-12);
  const std::vector<bool> two{true, true};
  const std::vector<double> half{0.0, kPi / 2};
  EXPECT_NEAR(heading_weighted_ap(two, half, ranked_scores(2), 2), oracle::curve_ap({1, 0.5}, 2), 1e-12);
}

TEST(AveragePrecision, RandomCurvesMatchOracleAndBounds) {
  std::mt19937_64 g(3);
  std::bernoulli_distribution tp(0.6);
  std::uniform_real_distribution<double> err(0, kPi);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + g() % 40;
    std::vector<bool> flags(n);
    std::vector<double> errors(n), mass(n), plain(n);
    std::size_t tps = 0;
    for (std::size_t i = 0; i < n; ++i) {
      flags[i] = tp(g);
      errors[i] = flags[i] ? err(g) : 0.0;
      plain[i] = flags[i];
      mass[i] = flags[i] ? 1.0 - errors[i] / kPi : 0.0;
      tps += flags[i];
    }
    const std::size_t num_gt = tps + g() % 5 + (tps == 0);
    const auto scores = ranked_scores(n);
    const double ap = average_precision(flags, scores, num_gt);
    const double aph = heading_weighted_ap(flags, errors, scores, num_gt);
    EXPECT_NEAR(ap, oracle::curve_ap(plain, num_gt), 1e-12);
    EXPECT_NEAR(aph, oracle::curve_ap(mass, num_gt), 1e-12);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
    EXPECT_LE(aph, ap + 1e-15);

    // Lower-scored duplicates only add trailing false positives.
    auto dflags = flags;
    auto dscores = scores;
    for (std::size_t i = 0; i < n; ++i) {
      dflags.push_back(false);
      dscores.push_back(scores[i] - 0.5);
    }
    if (tps == num_gt) EXPECT_NEAR(average_precision(dflags, dscores, num_gt), ap, 1e-12);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g);
    std::vector<bool> pf(n);
    std::vector<double> ps(n), pe(n);
    for (std::size_t i = 0; i < n; ++i) {
      pf[i] = flags[perm[i]];
      ps[i] = scores[perm[i]];
      pe[i] = errors[perm[i]];
    }
    EXPECT_EQ(average_precision(pf, ps, num_gt), ap);
    EXPECT_EQ(heading_weighted_ap(pf, pe, ps, num_gt), aph);
  }
}

std::vector<FrameEval> synthetic_frames(std::mt19937_64& g, double max_range) {
  std::uniform_real_distribution<double> r(0.0, max_range), th(-kPi, kPi), jitter(-0.4, 0.4), sc(0, 1);
  std::uniform_int_distribution<std::size_t> pts(0, 30);
  std::vector<FrameEval> frames(6);
  for (FrameEval& f : frames) {
    for (int i = 0; i < 12; ++i) {
      const double rr = r(g), a = th(g);
      const Box3D b = car(rr * std::cos(a), rr * std::sin(a), th(g));
      f.labels.push_back({b, 0});
      f.label_point_counts.push_back(pts(g));
      if (sc(g) < 0.8) {
        f.detections.push_back({car(b.cx + jitter(g), b.cy + jitter(g), b.heading + jitter(g)), sc(g), 0});
      }
      if (sc(g) < 0.3) {
        const double fr = r(g), fa = th(g);
        f.detections.push_back({car(fr * std::cos(fa), fr * std::sin(fa)), sc(g), 0});
      }
    }
  }
  return frames;
}

TEST(RangeBuckets, CountingIdentities) {
  std::mt19937_64 g(4);
  const EvalConfig cfg;
  for (int t = 0; t < 20; ++t) {
    const auto frames = synthetic_frames(g, 80.0);
    const auto rows = range_bucketed_eval(frames, cfg, 0);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].bucket, "overall");
    EXPECT_EQ(rows[1].bucket, "0-30m");
    std::size_t gt_sum = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      EXPECT_EQ(rows[i].true_positives + rows[i].false_negatives, rows[i].num_gt);
      gt_sum += rows[i].num_gt;
    }
    EXPECT_EQ(rows[0].true_positives + rows[0].false_negatives, rows[0].num_gt);
    EXPECT_EQ(gt_sum, rows[0].num_gt);
    std::size_t qualifying = 0;
    for (const auto& f : frames) {
      for (std::size_t c : f.label_point_counts) qualifying += c >= cfg.min_points;
    }
    EXPECT_EQ(rows[0].num_gt, qualifying);
    for (const auto& row : rows) {
      EXPECT_GE(row.ap, row.aph);
      EXPECT_LE(row.ap, 1.0);
    }
  }
}

TEST(RangeBuckets, NearFramesOverallEqualsFirstBucket) {
  std::mt19937_64 g(5);
  const auto frames = synthetic_frames(g, 25.0);
  const auto rows = range_bucketed_eval(frames, EvalConfig{}, 0);
  EXPECT_EQ(rows[0].ap, rows[1].ap);
  EXPECT_EQ(rows[0].aph, rows[1].aph);
  EXPECT_EQ(rows[0].num_gt, rows[1].num_gt);
  EXPECT_EQ(rows[2].num_gt + rows[3].num_gt, 0u);
}

TEST(RangeBuckets, DetectionOrderInvariant) {
  std::mt19937_64 g(6);
  auto frames = synthetic_frames(g, 60.0);
  const auto base = range_bucketed_eval(frames, EvalConfig{}, 0);
  for (auto& f : frames) std::shuffle(f.detections.begin(), f.detections.end(), g);
  const auto shuffled = range_bucketed_eval(frames, EvalConfig{}, 0);
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(base[i].ap, shuffled[i].ap);
    EXPECT_EQ(base[i].aph, shuffled[i].aph);
  }
}

TEST(EvalConfig, Validation) {
  EvalConfig c;
  EXPECT_NO_THROW(validate(c));
  const auto buckets = default_range_buckets();
  ASSERT_EQ(buckets.size(), 3u);
  EXPECT_EQ(buckets[1].lo, 30.0);
  EXPECT_EQ(buckets[1].hi, 50.0);
  EXPECT_TRUE(std::isinf(buckets[2].hi));
  c.iou_threshold = {0.7, 0.5};
  EXPECT_EQ(c.threshold_for(0), 0.7);
  EXPECT_EQ(c.threshold_for(5), 0.5);
  c.iou_threshold = {1.0};
  EXPECT_THROW(validate(c), Error);
  c = EvalConfig{};
  c.range_buckets = {{"a", 0, 40}, {"b", 30, 60}};
  EXPECT_THROW(validate(c), Error);
  c = EvalConfig{};
  c.recall_sample_points = 1;
  EXPECT_THROW(validate(c), Error);
}

}  // namespace
