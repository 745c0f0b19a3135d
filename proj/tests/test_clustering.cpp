#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stpe/clustering.hpp"

using namespace stpe;

namespace {

std::vector<Point2> random_points(oracle::Rng& rng, std::size_t n, double side) {
  std::vector<Point2> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({rng.uniform(0, side), rng.uniform(0, side), static_cast<std::int64_t>(i)});
  }
  return pts;
}

double min_cross_distance(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  double best = 1e300;
  for (const auto& p : a)
    for (const auto& q : b) best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
  return best;
}

}  // namespace

TEST(Dbscan, EmptyInput) {
  std::vector<Point2> none;
  EXPECT_TRUE(dbscan(none).clusters.empty());
}

TEST(Dbscan, TwoFarPointsAreSingletons) {
  std::vector<Point2> pts{{100, 0, 1}, {0, 0, 2}};
  const auto cs = dbscan(pts, 30.0);
  ASSERT_EQ(cs.clusters.size(), 2u);
  EXPECT_EQ(cs.clusters[0].size(), 1u);
  EXPECT_EQ(cs.clusters[0][0].payload_id, 1);
  EXPECT_EQ(cs.clusters[1][0].payload_id, 2);
}

TEST(Dbscan, ChainingAtExactRadius) {
  std::vector<Point2> pts{{0, 0, 0}, {30, 0, 1}, {60, 0, 2}, {90.001, 0, 3}};
  const auto cs = dbscan(pts, 30.0);
  ASSERT_EQ(cs.clusters.size(), 2u);
  EXPECT_EQ(cs.clusters[0].size(), 3u);
}

TEST(Dbscan, RejectsNonPositiveRadius) {
  std::vector<Point2> pts{{0, 0, 0}};
  EXPECT_THROW(dbscan(pts, 0.0), ValidationError);
}

TEST(Dbscan, MatchesUnionFindOracle) {
  oracle::Rng rng(101);
  for (int t = 0; t < 200; ++t) {
    const auto pts = random_points(rng, 200, 500.0);
    const double r = t == 0 ? 30.0 : rng.uniform(5, 60);
    EXPECT_EQ(oracle::as_partition(dbscan(pts, r)), oracle::union_find_partition(pts, r));
  }
}

TEST(Dbscan, PartitionConnectivityAndSeparation) {
  oracle::Rng rng(102);
  for (int t = 0; t < 20; ++t) {
    const auto pts = random_points(rng, 150, 400.0);
    const auto cs = dbscan(pts, 30.0);
    EXPECT_EQ(cs.total_points(), pts.size());
    for (std::size_t a = 0; a < cs.clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < cs.clusters.size(); ++b) {
        EXPECT_GT(min_cross_distance(cs.clusters[a], cs.clusters[b]), 30.0);
      }
    }
  }
}

TEST(Dbscan, InvariantUnderPermutation) {
  oracle::Rng rng(103);
  for (int t = 0; t < 50; ++t) {
    auto pts = random_points(rng, 120, 300.0);
    const auto before = dbscan(pts, 30.0);
    std::shuffle(pts.begin(), pts.end(), rng.g);
    const auto after = dbscan(pts, 30.0);
    ASSERT_EQ(before.clusters.size(), after.clusters.size());
    for (std::size_t c = 0; c < before.clusters.size(); ++c) EXPECT_EQ(before.clusters[c], after.clusters[c]);
  }
}

TEST(Dbscan, ClustersOrderedBySmallestPayload) {
  oracle::Rng rng(104);
  const auto pts = random_points(rng, 100, 500.0);
  const auto cs = dbscan(pts, 30.0);
  for (std::size_t c = 1; c < cs.clusters.size(); ++c) {
    EXPECT_LT(cs.clusters[c - 1].front().payload_id, cs.clusters[c].front().payload_id);
  }
}

TEST(Dbscan, MonotoneInRadius) {
  oracle::Rng rng(105);
  for (int t = 0; t < 50; ++t) {
    const auto pts = random_points(rng, 150, 500.0);
    const double r = rng.uniform(5, 40), r2 = r + rng.uniform(0.1, 30);
    const auto small = oracle::as_partition(dbscan(pts, r));
    const auto big = oracle::as_partition(dbscan(pts, r2));
    std::vector<std::size_t> owner(pts.size());
    for (std::size_t g = 0; g < big.size(); ++g)
      for (auto i : big[g]) owner[i] = g;
    for (const auto& c : small) {
      for (auto i : c) EXPECT_EQ(owner[i], owner[c.front()]);
    }
  }
}
