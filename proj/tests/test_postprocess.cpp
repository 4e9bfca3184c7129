#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "starnet/error.hpp"
#include "starnet/postprocess.hpp"

namespace {

using namespace starnet;

std::vector<Detection> random_dets(std::mt19937_64& g, std::size_t n, int classes = 2, double spread = 6.0) {
  std::uniform_real_distribution<double> pos(-spread, spread), dim(0.5, 3.0), ang(-kPi, kPi), sc(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::vector<Detection> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.push_back(Detection{Box3D{pos(g), pos(g), 0.0, dim(g), dim(g), 1.0, ang(g)}, sc(g), cls(g)});
  }
  return d;
}

bool same(const Detection& a, const Detection& b) {
  return a.box == b.box && a.score == b.score && a.class_id == b.class_id;
}

void expect_same(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same(a[i], b[i])) << i;
}

TEST(Nms, Examples) {
  const Box3D box{0, 0, 0, 2, 1, 1, 0.3};
  const std::vector<Detection> one{{box, 0.4, 0}};
  expect_same(oriented_nms(one, 0.5, 10), one);

  const std::vector<Detection> twins{{box, 0.8, 0}, {box, 0.9, 0}};
  const auto kept = oriented_nms(twins, 0.5, 10);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9);

  const std::vector<Detection> cross{{box, 0.8, 0}, {box, 0.9, 1}};
  EXPECT_EQ(oriented_nms(cross, 0.5, 10).size(), 2u);
  EXPECT_TRUE(oriented_nms({}, 0.5, 10).empty());
  std::mt19937_64 g(1);
  EXPECT_EQ(oriented_nms(random_dets(g, 30, 1, 100.0), 0.5, 7).size(), 7u);
}

TEST(Nms, TiesKeepLowerIndex) {
  const Box3D a{0, 0, 0, 2, 1, 1, 0.0};
  Box3D b = a;
  b.cx = 0.1;
  const std::vector<Detection> d{{b, 0.5, 0}, {a, 0.5, 0}};
  EXPECT_EQ(oriented_nms_indices(d, 0.5, 10), (std::vector<std::size_t>{0}));
}

TEST(Nms, MatchesBruteForceReference) {
  std::mt19937_64 g(2);
  for (int t = 0; t < 200; ++t) {
    const auto dets = random_dets(g, 50);
    for (double thr : {0.1, 0.5, 0.7}) {
      for (std::size_t cap : {std::size_t{5}, std::size_t{512}}) {
        expect_same(oriented_nms(dets, thr, cap), oracle::brute_force_nms(dets, thr, cap));
      }
    }
  }
}

TEST(Nms, Properties) {
  std::mt19937_64 g(3);
  for (int t = 0; t < 100; ++t) {
    const auto dets = random_dets(g, 40);
    const auto kept = oriented_nms(dets, 0.5, 512);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (i > 0) EXPECT_GE(kept[i - 1].score, kept[i].score);
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        if (kept[i].class_id == kept[j].class_id) EXPECT_LE(bev_iou(kept[i].box, kept[j].box), 0.5);
      }
    }
    expect_same(oriented_nms(kept, 0.5, 512), kept);
    auto shuffled = dets;
    std::shuffle(shuffled.begin(), shuffled.end(), g);
    expect_same(oriented_nms(shuffled, 0.5, 512), kept);
  }
}

TEST(ScoreFilter, Examples) {
  std::mt19937_64 g(4);
  const auto dets = random_dets(g, 20);
  expect_same(score_filter(dets, 0.0), dets);
  auto below = dets;
  for (auto& d : below) d.score = std::min(d.score, 0.99);
  EXPECT_TRUE(score_filter(below, 1.0).empty());
  const std::vector<Detection> mixed{{Box3D{}, 0.2, 0}, {Box3D{}, 0.6, 0}};
  const auto kept = score_filter(mixed, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.6);
  EXPECT_EQ(score_filter(mixed, 0.6).size(), 1u);
  EXPECT_THROW(score_filter(mixed, -0.1), Error);
  EXPECT_THROW(score_filter(mixed, 1.5), Error);
}

}  // namespace
