#pragma once

/**
 * @file stpe.hpp
 * @brief Spatial-temporal particle estimation over a sliding query window.
 *
 * Each query's top-K retrieval positions are treated as particles. They are
 * clustered, fitted with an axis-aligned Gaussian per cluster, carried to the
 * newest frame by the dead-reckoned displacement, and averaged over the window.
 * Submaps are then re-ranked by the mean of that mixture over a square of
 * half-side r around their centers.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stpe/clustering.hpp"
#include "stpe/density.hpp"
#include "stpe/descriptor_index.hpp"
#include "stpe/errors.hpp"
#include "stpe/frames.hpp"
#include "stpe/motion.hpp"

namespace stpe {

enum class ScoringMode { database_wide, candidate_set };

inline std::string to_string(ScoringMode m) { return m == ScoringMode::database_wide ? "database_wide" : "candidate_set"; }

inline ScoringMode scoring_mode_from_string(const std::string& s) {
  if (s == "database_wide") return ScoringMode::database_wide;
  if (s == "candidate_set") return ScoringMode::candidate_set;
  throw ValidationError("scoring_mode: unknown value '" + s + "'");
}

struct StpeConfig {
  std::size_t k_particles = 30;
  std::size_t c_retrieve = 100;
  std::size_t l_window = 50;
  double lambda_rate = 0.30;
  double radius_m = 30.0;
  double window_m = 250.0;
  double sigma_floor_m = kDefaultSigmaFloorM;
  ScoringMode scoring_mode = ScoringMode::database_wide;
  double prune_sigma_mult = 4.0;
  double heading_interval_m = DeadReckoner::kDefaultIntervalM;
  std::size_t result_size = 100;  // entries kept in each RankedResult

  void validate() const {
    if (k_particles < 1) throw ValidationError("k_particles must be at least 1");
    if (k_particles > c_retrieve) throw ValidationError("k_particles must not exceed c_retrieve");
    if (l_window < 1) throw ValidationError("l_window must be at least 1");
    if (!(lambda_rate > 0.0 && lambda_rate <= 1.0)) throw ValidationError("lambda_rate must lie in (0, 1]");
    if (!(radius_m > 0.0)) throw ValidationError("radius_m must be positive");
    if (!(window_m > 0.0)) throw ValidationError("window_m must be positive");
    if (!(sigma_floor_m > 0.0)) throw ValidationError("sigma_floor_m must be positive");
    if (!(prune_sigma_mult >= 0.0)) throw ValidationError("prune_sigma_mult must be non-negative");
    if (!(heading_interval_m > 0.0)) throw ValidationError("heading_interval_m must be positive");
    if (result_size < 1) throw ValidationError("result_size must be at least 1");
  }
};

struct RankedEntry {
  SubmapId submap_id = 0;
  double similarity = 0.0;
  double probability = 0.0;
  std::size_t final_rank = 0;  // 1-based
};

struct RankedResult {
  std::vector<RankedEntry> entries;
  std::optional<ScoringMode> mode;  // unset for similarity-only and particle-filter rankings
};

inline bool entry_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.probability != b.probability) return a.probability > b.probability;
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.submap_id < b.submap_id;
}

// Keeps the best `keep` entries in entry_before order and numbers them.
inline void finalize_ranking(std::vector<RankedEntry>& entries, std::size_t keep) {
  const auto take = std::min(keep, entries.size());
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(take), entries.end(), entry_before);
  entries.resize(take);
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].final_rank = i + 1;
}

// Ranking by similarity alone, i.e. the single-query baseline.
inline RankedResult similarity_ranking(std::span<const RetrievalHit> hits) {
  RankedResult out;
  out.entries.reserve(hits.size());
  for (const auto& h : hits) out.entries.push_back({h.submap_id, h.similarity, 0.0, 0});
  finalize_ranking(out.entries, out.entries.size());
  return out;
}

/// Density of one query's retrieval: DBSCAN over the top-K hit positions, one
/// Gaussian per cluster.
inline MixtureDensity frame_density(std::span<const RetrievalHit> hits, std::size_t k, double radius_m,
                                    double sigma_floor_m) {
  if (hits.empty()) throw ValidationError("frame has no retrieval hits");
  const auto take = std::min(k, hits.size());
  std::vector<Point2> pts;
  pts.reserve(take);
  for (std::size_t i = 0; i < take; ++i) pts.push_back({hits[i].position.x, hits[i].position.y, hits[i].submap_id});
  return fit_components(dbscan(pts, radius_m), sigma_floor_m);
}

/// Positions (oldest first) of the ceil(lambda * n) frames used from a window of
/// n frames: evenly strided backwards from the newest, which is always included.
inline std::vector<std::size_t> select_window(std::size_t n, double lambda_rate) {
  if (n == 0) throw ValidationError("empty window");
  if (!(lambda_rate > 0.0 && lambda_rate <= 1.0)) throw ValidationError("lambda_rate must lie in (0, 1]");
  // The epsilon keeps products such as 0.3 * 50 from rounding up to 16.
  auto m = static_cast<std::size_t>(std::ceil(lambda_rate * static_cast<double>(n) - 1e-9));
  m = std::clamp<std::size_t>(m, 1, n);
  std::vector<std::size_t> picked(m);
  for (std::size_t i = 0; i < m; ++i) picked[m - 1 - i] = n - 1 - (i * n) / m;
  return picked;
}

namespace detail {

// Per-axis integrals shared by every candidate with the same coordinate value.
class AxisTable {
 public:
  AxisTable(const MixtureDensity& d, double r, bool x_axis) : d_(d), r_(r), x_axis_(x_axis) {}

  const double* row(double c) {
    auto [it, inserted] = slot_.try_emplace(c, slot_.size());
    if (inserted) {
      for (const auto& comp : d_.components) {
        values_.push_back(x_axis_ ? axis_integral(c, r_, comp.mu_x, comp.sigma_x)
                                  : axis_integral(c, r_, comp.mu_y, comp.sigma_y));
      }
    }
    return values_.data() + it->second * d_.components.size();
  }

 private:
  const MixtureDensity& d_;
  double r_;
  bool x_axis_;
  std::unordered_map<double, std::size_t> slot_;
  std::vector<double> values_;
};

}  // namespace detail

/// Scores submaps against the density and re-ranks them.
///
/// database_wide scores every submap whose center lies within
/// prune_sigma_mult * max(sigma_x, sigma_y) + r of some component mean (all
/// submaps when the multiplier is infinite); the rest score 0. candidate_set
/// scores only the current hits. Current hits always appear in the result.
/// Similarities of non-hit submaps come from unit_query; when it is empty they
/// are reported as -1.
inline RankedResult score_and_rerank(const MixtureDensity& density, const DescriptorIndex& index,
                                     std::span<const float> unit_query, std::span<const RetrievalHit> current_hits,
                                     const StpeConfig& cfg) {
  if (density.empty()) throw ValidationError("cannot score against an empty density");
  const double r = cfg.radius_m;
  const double inv_area = 1.0 / (4.0 * r * r);
  detail::AxisTable xs(density, r, true), ys(density, r, false);
  const std::size_t m = density.components.size();
  auto probability = [&](const Vec2& p) {
    const double* ix = xs.row(p.x);
    const double* iy = ys.row(p.y);
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += density.components[k].amplitude * ix[k] * iy[k];
    return s * inv_area;
  };

  RankedResult out;
  out.mode = cfg.scoring_mode;
  if (cfg.scoring_mode == ScoringMode::candidate_set) {
    out.entries.reserve(current_hits.size());
    for (const auto& h : current_hits) out.entries.push_back({h.submap_id, h.similarity, probability(h.position), 0});
    finalize_ranking(out.entries, cfg.result_size);
    return out;
  }

  std::vector<std::uint8_t> scored(index.size(), 0);
  std::vector<std::size_t> rows;
  if (!std::isfinite(cfg.prune_sigma_mult)) {
    rows.resize(index.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    std::fill(scored.begin(), scored.end(), 1);
  } else {
    for (const auto& c : density.components) {
      const double reach = cfg.prune_sigma_mult * std::max(c.sigma_x, c.sigma_y) + r;
      index.for_each_within(c.mu_x, c.mu_y, reach, [&](std::size_t row) {
        if (!scored[row]) {
          scored[row] = 1;
          rows.push_back(row);
        }
      });
    }
    std::sort(rows.begin(), rows.end());
  }

  std::unordered_map<SubmapId, double> hit_sim;
  hit_sim.reserve(current_hits.size());
  for (const auto& h : current_hits) hit_sim.emplace(h.submap_id, h.similarity);
  auto similarity_of = [&](std::size_t row) {
    if (auto it = hit_sim.find(index.id(row)); it != hit_sim.end()) return it->second;
    return unit_query.empty() ? -1.0 : index.similarity(unit_query, row);
  };

  out.entries.reserve(rows.size() + current_hits.size());
  for (std::size_t row : rows) {
    out.entries.push_back({index.id(row), similarity_of(row), probability(index.position(row)), 0});
  }
  for (const auto& h : current_hits) {
    const auto row = index.row_of(h.submap_id);
    if (row < index.size() && scored[row]) continue;
    out.entries.push_back({h.submap_id, h.similarity, 0.0, 0});
  }
  finalize_ranking(out.entries, cfg.result_size);
  return out;
}

/// One trajectory's sliding window. Holds a reference to the shared index,
/// which must outlive the engine.
class StpeEngine {
 public:
  struct WindowEntry {
    std::int64_t frame_index = 0;
    Vec2 position;            // dead-reckoned world position
    double path_from_start = 0.0;  // cumulative odometry path length
    std::vector<RetrievalHit> hits;
    MixtureDensity density;        // fitted at the frame's own position
  };

  StpeEngine(const DescriptorIndex& index, StpeConfig cfg)
      : index_(&index), cfg_(cfg), reckoner_(cfg.heading_interval_m) {
    cfg_.validate();
  }

  const StpeConfig& config() const { return cfg_; }
  const std::deque<WindowEntry>& window() const { return window_; }

  // Runs top-C retrieval for the frame and adds it to the window.
  void push_frame(const QueryFrame& frame) { push_frame(frame, index_->query_top_c(frame.descriptor, cfg_.c_retrieve)); }

  // Adds a frame whose retrieval was computed elsewhere (hits in hit_before order).
  void push_frame(const QueryFrame& frame, std::vector<RetrievalHit> hits) {
    if (reckoner_.started() && frame.index <= last_index_) {
      throw ValidationError("frame index " + std::to_string(frame.index) + " is not greater than " +
                            std::to_string(last_index_));
    }
    if (hits.size() > cfg_.c_retrieve) hits.resize(cfg_.c_retrieve);
    double path = 0.0;
    Pose2 pose;
    if (!reckoner_.started()) {
      pose = reckoner_.start({}, frame.heading);
    } else {
      pose = reckoner_.step(frame.rel, frame.heading, frame.path_len_from_prev);
      path = total_path_ + frame.path_len_from_prev;
    }
    total_path_ = path;
    last_index_ = frame.index;
    WindowEntry e;
    e.frame_index = frame.index;
    e.position = {pose.x, pose.y};
    e.path_from_start = path;
    e.density = frame_density(hits, cfg_.k_particles, cfg_.radius_m, cfg_.sigma_floor_m);
    e.hits = std::move(hits);
    window_.push_back(std::move(e));
    while (window_.size() > cfg_.l_window || window_.back().path_from_start - window_.front().path_from_start > cfg_.window_m) {
      window_.pop_front();
    }
  }

  std::vector<std::size_t> select_window_frames() const { return select_window(window_.size(), cfg_.lambda_rate); }

  // Mixture of the selected frames' densities, each carried to the newest frame.
  MixtureDensity estimate_density(std::span<const std::size_t> selected) const {
    if (selected.empty()) throw ValidationError("no frames selected");
    const auto& newest = window_.back();
    std::vector<MixtureDensity> carried;
    carried.reserve(selected.size());
    for (std::size_t pos : selected) {
      const auto& e = window_.at(pos);
      carried.push_back(translate(e.density, {newest.position.x - e.position.x, newest.position.y - e.position.y}));
    }
    return mix(carried);
  }

  MixtureDensity estimate_density() const {
    const auto selected = select_window_frames();
    return estimate_density(selected);
  }

  // Re-ranks the newest frame's retrieval; unit_query is its normalized descriptor.
  RankedResult rerank(std::span<const float> unit_query) const {
    if (window_.empty()) throw ValidationError("no frames pushed");
    return score_and_rerank(estimate_density(), *index_, unit_query, window_.back().hits, cfg_);
  }

  RankedResult step(const QueryFrame& frame) {
    push_frame(frame);
    return rerank(index_->prepare_query(frame.descriptor));
  }

 private:
  const DescriptorIndex* index_;
  StpeConfig cfg_;
  DeadReckoner reckoner_;
  std::deque<WindowEntry> window_;
  double total_path_ = 0.0;
  std::int64_t last_index_ = std::numeric_limits<std::int64_t>::min();
};

}  // namespace stpe
