#pragma once

// Survival-gated particle filter used as a comparison baseline inside the same
// retrieval framework: particles start on the top hits, move with odometry,
// survive only near the current top hits, and are re-seeded on depletion.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "stpe/descriptor_index.hpp"
#include "stpe/errors.hpp"
#include "stpe/motion.hpp"
#include "stpe/stpe.hpp"

namespace stpe {

struct Particle {
  double x = 0.0;
  double y = 0.0;
  bool alive = true;
};

struct PfConfig {
  std::size_t k_init = 120;
  double retain_radius_m = 30.0;
  std::size_t k_topk = 120;
  double jitter_m = 5.0;  // half-width of the uniform jitter on cycled seeds
  std::uint64_t seed = 0;

  void validate() const {
    if (k_init < 1) throw ValidationError("k_init must be at least 1");
    if (!(retain_radius_m > 0.0)) throw ValidationError("retain_radius_m must be positive");
    if (k_topk < 1) throw ValidationError("k_topk must be at least 1");
    if (!(jitter_m >= 0.0)) throw ValidationError("jitter_m must be non-negative");
  }
};

struct PfState {
  std::vector<Particle> particles;
  std::mt19937_64 rng;
  bool reseeded = false;  // particles were (re)generated at the latest update
  std::size_t reseed_count = 0;
};

namespace detail {

inline void seed_particles(PfState& s, std::span<const RetrievalHit> hits, const PfConfig& cfg) {
  if (hits.empty()) throw ValidationError("cannot seed particles from an empty hit list");
  const auto distinct = std::min(cfg.k_init, hits.size());
  s.particles.clear();
  s.particles.reserve(cfg.k_init);
  for (std::size_t i = 0; i < cfg.k_init; ++i) {
    const auto& h = hits[i % distinct];
    Particle p{h.position.x, h.position.y, true};
    if (i >= distinct) {
      p.x += uniform_pm(s.rng, cfg.jitter_m);
      p.y += uniform_pm(s.rng, cfg.jitter_m);
    }
    s.particles.push_back(p);
  }
  s.reseeded = true;
}

inline bool near_any(const Particle& p, std::span<const RetrievalHit> hits, double r) {
  const double r2 = r * r;
  for (const auto& h : hits) {
    const double dx = p.x - h.position.x, dy = p.y - h.position.y;
    if (dx * dx + dy * dy <= r2) return true;
  }
  return false;
}

}  // namespace detail

inline PfState pf_init(std::span<const RetrievalHit> hits, const PfConfig& cfg) {
  cfg.validate();
  PfState s;
  s.rng.seed(cfg.seed);
  detail::seed_particles(s, hits, cfg);
  return s;
}

// Moves every particle by the world-frame motion, keeps those within
// retain_radius_m of one of the current top-k_topk hits, re-seeds if none remain.
inline void pf_step(PfState& s, const Vec2& motion, std::span<const RetrievalHit> hits, const PfConfig& cfg) {
  const auto gate = hits.first(std::min(cfg.k_topk, hits.size()));
  for (auto& p : s.particles) {
    p.x += motion.x;
    p.y += motion.y;
    p.alive = detail::near_any(p, gate, cfg.retain_radius_m);
  }
  std::erase_if(s.particles, [](const Particle& p) { return !p.alive; });
  if (s.particles.empty()) {
    detail::seed_particles(s, hits, cfg);
    ++s.reseed_count;
  } else {
    s.reseeded = false;
  }
}

// Ranks the current hits by how many particles lie within retain_radius_m of
// each; probability is that count over the particle total. Freshly seeded
// particles carry no history, so the similarity order is returned instead.
inline RankedResult pf_rank(const PfState& s, std::span<const RetrievalHit> hits, const PfConfig& cfg) {
  if (s.reseeded || s.particles.empty()) return similarity_ranking(hits);
  const double r2 = cfg.retain_radius_m * cfg.retain_radius_m;
  const double total = static_cast<double>(s.particles.size());
  RankedResult out;
  out.entries.reserve(hits.size());
  for (const auto& h : hits) {
    std::size_t count = 0;
    for (const auto& p : s.particles) {
      const double dx = p.x - h.position.x, dy = p.y - h.position.y;
      if (dx * dx + dy * dy <= r2) ++count;
    }
    out.entries.push_back({h.submap_id, h.similarity, static_cast<double>(count) / total, 0});
  }
  finalize_ranking(out.entries, out.entries.size());
  return out;
}

}  // namespace stpe
