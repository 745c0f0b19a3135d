#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stpe/pf_baseline.hpp"
#include "stpe/synthworld.hpp"

using namespace stpe;

namespace {

std::vector<RetrievalHit> random_hits(oracle::Rng& rng, std::size_t n, double extent) {
  std::vector<RetrievalHit> hits;
  for (std::size_t i = 0; i < n; ++i) {
    hits.push_back({static_cast<SubmapId>(1000 + i), 1.0 - 0.001 * static_cast<double>(i),
                    {rng.uniform(0, extent), rng.uniform(0, extent)}});
  }
  return hits;
}

}  // namespace

TEST(PfInit, OneParticlePerDistinctHit) {
  oracle::Rng rng(401);
  const auto hits = random_hits(rng, 150, 1000);
  const auto s = pf_init(hits, PfConfig{});
  ASSERT_EQ(s.particles.size(), 120u);
  for (std::size_t i = 0; i < 120; ++i) {
    EXPECT_EQ(s.particles[i].x, hits[i].position.x);
    EXPECT_EQ(s.particles[i].y, hits[i].position.y);
  }
}

TEST(PfInit, CyclesWithJitter) {
  const std::vector<RetrievalHit> one{{7, 0.9, {100, 200}}};
  PfConfig cfg;
  cfg.k_init = 4;
  const auto s = pf_init(one, cfg);
  ASSERT_EQ(s.particles.size(), 4u);
  EXPECT_EQ(s.particles[0].x, 100.0);
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_LE(std::abs(s.particles[i].x - 100.0), 5.0);
    EXPECT_LE(std::abs(s.particles[i].y - 200.0), 5.0);
    EXPECT_NE(s.particles[i].x, 100.0);
  }
}

TEST(PfInit, DeterministicUnderSeed) {
  const std::vector<RetrievalHit> two{{1, 0.9, {0, 0}}, {2, 0.8, {50, 50}}};
  PfConfig cfg;
  cfg.seed = 42;
  const auto a = pf_init(two, cfg), b = pf_init(two, cfg);
  for (std::size_t i = 0; i < a.particles.size(); ++i) {
    EXPECT_EQ(a.particles[i].x, b.particles[i].x);
    EXPECT_EQ(a.particles[i].y, b.particles[i].y);
  }
  cfg.seed = 43;
  const auto c = pf_init(two, cfg);
  EXPECT_NE(a.particles[5].x, c.particles[5].x);
}

TEST(PfInit, Errors) {
  std::vector<RetrievalHit> none;
  EXPECT_THROW(pf_init(none, PfConfig{}), ValidationError);
  PfConfig bad;
  bad.k_init = 0;
  const std::vector<RetrievalHit> one{{7, 0.9, {0, 0}}};
  EXPECT_THROW(pf_init(one, bad), ValidationError);
  bad = PfConfig{};
  bad.retain_radius_m = 0;
  EXPECT_THROW(pf_init(one, bad), ValidationError);
}

TEST(PfStep, AllOnHitsSurvive) {
  oracle::Rng rng(402);
  const auto hits = random_hits(rng, 120, 1000);
  auto s = pf_init(hits, PfConfig{});
  pf_step(s, {0, 0}, hits, PfConfig{});
  EXPECT_EQ(s.particles.size(), 120u);
  EXPECT_FALSE(s.reseeded);
  EXPECT_EQ(s.reseed_count, 0u);
}

TEST(PfStep, FullDepletionReseeds) {
  oracle::Rng rng(403);
  const auto hits = random_hits(rng, 120, 1000);
  auto s = pf_init(hits, PfConfig{});
  pf_step(s, {1e5, 0}, hits, PfConfig{});
  EXPECT_EQ(s.particles.size(), 120u);
  EXPECT_TRUE(s.reseeded);
  EXPECT_EQ(s.reseed_count, 1u);
  EXPECT_EQ(s.particles[0].x, hits[0].position.x);
}

TEST(PfStep, SurvivalMatchesBruteForce) {
  oracle::Rng rng(404);
  for (int t = 0; t < 200; ++t) {
    PfConfig cfg;
    cfg.k_init = rng.between(1, 150);
    cfg.k_topk = rng.between(1, 150);
    cfg.seed = t;
    const auto first = random_hits(rng, rng.between(1, 150), 600);
    const auto next = random_hits(rng, rng.between(1, 150), 600);
    auto s = pf_init(first, cfg);
    const Vec2 motion{rng.uniform(-20, 20), rng.uniform(-20, 20)};
    std::vector<Particle> expected;
    const auto k = std::min(cfg.k_topk, next.size());
    for (auto p : s.particles) {
      p.x += motion.x;
      p.y += motion.y;
      for (std::size_t i = 0; i < k; ++i) {
        if (std::hypot(p.x - next[i].position.x, p.y - next[i].position.y) <= cfg.retain_radius_m) {
          expected.push_back(p);
          break;
        }
      }
    }
    pf_step(s, motion, next, cfg);
    if (expected.empty()) {
      EXPECT_TRUE(s.reseeded);
      EXPECT_EQ(s.particles.size(), cfg.k_init);
    } else {
      ASSERT_EQ(s.particles.size(), expected.size());
      for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(s.particles[i].x, expected[i].x);
        EXPECT_EQ(s.particles[i].y, expected[i].y);
      }
    }
    EXPECT_GE(s.particles.size(), 1u);
  }
}

TEST(PfRank, ClusteredParticlesWin) {
  const std::vector<RetrievalHit> hits{{1, 0.9, {0, 0}}, {2, 0.8, {500, 500}}, {3, 0.7, {900, 0}}};
  PfConfig cfg;
  auto s = pf_init(hits, cfg);
  s.particles.assign(10, Particle{500, 500, true});
  s.reseeded = false;
  const auto res = pf_rank(s, hits, cfg);
  EXPECT_EQ(res.entries[0].submap_id, 2);
  EXPECT_DOUBLE_EQ(res.entries[0].probability, 1.0);
  EXPECT_FALSE(res.mode.has_value());
}

TEST(PfRank, ReseededGivesSimilarityOrder) {
  oracle::Rng rng(405);
  auto hits = random_hits(rng, 50, 1000);
  std::shuffle(hits.begin(), hits.end(), rng.g);
  auto s = pf_init(hits, PfConfig{});
  const auto res = pf_rank(s, hits, PfConfig{});
  ASSERT_EQ(res.entries.size(), 50u);
  for (std::size_t i = 1; i < res.entries.size(); ++i) EXPECT_GT(res.entries[i - 1].similarity, res.entries[i].similarity);
}

TEST(PfRank, CountsMatchTally) {
  oracle::Rng rng(406);
  for (int t = 0; t < 100; ++t) {
    const auto hits = random_hits(rng, 60, 400);
    PfConfig cfg;
    auto s = pf_init(hits, cfg);
    s.particles.clear();
    const auto n = rng.between(1, 300);
    for (std::size_t i = 0; i < n; ++i) s.particles.push_back({rng.uniform(0, 400), rng.uniform(0, 400), true});
    s.reseeded = false;
    const auto res = pf_rank(s, hits, cfg);
    for (const auto& e : res.entries) {
      const auto& h = *std::find_if(hits.begin(), hits.end(), [&](const auto& x) { return x.submap_id == e.submap_id; });
      std::size_t tally = 0;
      for (const auto& p : s.particles) tally += std::hypot(p.x - h.position.x, p.y - h.position.y) <= cfg.retain_radius_m;
      EXPECT_EQ(e.probability, static_cast<double>(tally) / static_cast<double>(n));
    }
    for (std::size_t i = 1; i < res.entries.size(); ++i) EXPECT_FALSE(entry_before(res.entries[i], res.entries[i - 1]));
  }
}

TEST(PfTrajectory, TrueNeighbourhoodNeverDepleted) {
  synth::WorldSpec spec;
  spec.extent_x_m = spec.extent_y_m = 800.0;
  spec.descriptor_noise_sigma = 0.02;
  const auto world = synth::generate_world(spec);
  const auto db = synth::generate_database(world, spec);
  const auto index = DescriptorIndex::build(db);
  const auto frames = synth::generate_trajectory(world, spec, 600.0, 3);
  PfConfig cfg;
  PfState s;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto hits = index.query_top_c(frames[f].descriptor, cfg.k_topk);
    // Precondition of the property: the nearest submap is retrieved.
    double nearest = 1e300;
    for (const auto& h : hits) nearest = std::min(nearest, distance(h.position, *frames[f].gt));
    ASSERT_LE(nearest, 15.0) << "frame " << f;
    if (f == 0) {
      s = pf_init(hits, cfg);
    } else {
      const Vec2 motion{frames[f].gt->x - frames[f - 1].gt->x, frames[f].gt->y - frames[f - 1].gt->y};
      pf_step(s, motion, hits, cfg);
    }
  }
  EXPECT_EQ(s.reseed_count, 0u);
}
