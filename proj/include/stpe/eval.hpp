#pragma once

// Recall@N, timing, experiment runner, parameter sweeps and report writers.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "stpe/descriptor_index.hpp"
#include "stpe/errors.hpp"
#include "stpe/frames.hpp"
#include "stpe/motion.hpp"
#include "stpe/pf_baseline.hpp"
#include "stpe/stpe.hpp"
#include "stpe/synthworld.hpp"

namespace stpe::eval {

enum class Method { single, stpe, pf };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::single: return "single";
    case Method::stpe: return "stpe";
    case Method::pf: return "pf";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "single") return Method::single;
  if (s == "stpe") return Method::stpe;
  if (s == "pf") return Method::pf;
  throw ValidationError("method: unknown value '" + s + "'");
}

inline constexpr double kDefaultThresholdM = 30.0;

struct RecallReport {
  std::map<std::size_t, double> recall_at;
  std::size_t num_queries = 0;
  double threshold_m = kDefaultThresholdM;
  Method method = Method::single;
};

struct TimingReport {
  double mean_retrieval_us = 0.0;
  double p95_retrieval_us = 0.0;
  double mean_refine_us = 0.0;
  double p95_refine_us = 0.0;
};

// Position of a submap id, or nullopt when unknown.
using PositionMap = std::unordered_map<SubmapId, Vec2>;

inline PositionMap positions_of(const DescriptorIndex& index) {
  PositionMap m;
  m.reserve(index.size());
  for (std::size_t row = 0; row < index.size(); ++row) m.emplace(index.id(row), index.position(row));
  return m;
}

// True when one of the first n entries lies strictly closer than threshold_m to gt.
inline bool hit_within(const RankedResult& r, const Vec2& gt, const PositionMap& positions, std::size_t n,
                       double threshold_m) {
  const auto take = std::min(n, r.entries.size());
  for (std::size_t i = 0; i < take; ++i) {
    auto it = positions.find(r.entries[i].submap_id);
    if (it != positions.end() && distance(it->second, gt) < threshold_m) return true;
  }
  return false;
}

inline double recall_at_n(std::span<const RankedResult> results, std::span<const Vec2> ground_truth,
                          const PositionMap& positions, std::size_t n, double threshold_m = kDefaultThresholdM) {
  if (results.size() != ground_truth.size()) throw ValidationError("results and ground truth lengths differ");
  if (results.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t q = 0; q < results.size(); ++q) ok += hit_within(results[q], ground_truth[q], positions, n, threshold_m);
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

// Nearest-rank percentile.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct ExperimentConfig {
  StpeConfig stpe;
  PfConfig pf;
  std::vector<std::size_t> recall_ns{1, 5, 10, 30};
  double threshold_m = kDefaultThresholdM;
  std::size_t n_report = 30;

  std::size_t retrieval_depth(Method m) const {
    auto c = stpe.c_retrieve;
    if (m == Method::pf) c = std::max({c, pf.k_init, pf.k_topk});
    return c;
  }
};

// Top-C hits for every frame, computed once and shared by any number of runs.
struct RetrievalCache {
  std::size_t depth = 0;
  std::vector<std::vector<RetrievalHit>> hits;
  std::vector<std::vector<float>> unit_queries;
  std::vector<double> elapsed_us;
};

using Clock = std::chrono::steady_clock;

inline double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

inline RetrievalCache compute_retrievals(const DescriptorIndex& index, std::span<const QueryFrame> frames,
                                         std::size_t depth) {
  RetrievalCache cache;
  cache.depth = depth;
  cache.hits.reserve(frames.size());
  cache.unit_queries.reserve(frames.size());
  cache.elapsed_us.reserve(frames.size());
  for (const auto& f : frames) {
    const auto t0 = Clock::now();
    cache.hits.push_back(index.query_top_c(f.descriptor, depth));
    cache.elapsed_us.push_back(micros_since(t0));
    cache.unit_queries.push_back(index.prepare_query(f.descriptor));
  }
  return cache;
}

struct ExperimentResult {
  Method method = Method::single;
  RecallReport recall;
  TimingReport timing;
  std::vector<RankedResult> results;
  std::vector<double> retrieval_us;
  std::vector<double> refine_us;
};

inline std::vector<RetrievalHit> prefix(const std::vector<RetrievalHit>& hits, std::size_t n) {
  return {hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(std::min(n, hits.size()))};
}

/// Runs one method over the whole sequence. Motion noise, if any, is injected
/// into the odometry before the run. Retrieval is timed separately from the
/// refinement; when a cache is given its recorded retrieval times are reported.
inline ExperimentResult run_experiment(const DescriptorIndex& index, std::span<const QueryFrame> frames, Method method,
                                       const ExperimentConfig& cfg, const NoiseSpec& noise = {},
                                       const RetrievalCache* cache = nullptr) {
  cfg.stpe.validate();
  cfg.pf.validate();
  const auto depth = cfg.retrieval_depth(method);
  RetrievalCache local;
  if (cache == nullptr || cache->depth < depth || cache->hits.size() != frames.size()) {
    local = compute_retrievals(index, frames, depth);
    cache = &local;
  }
  const auto noisy = with_motion_noise(frames, noise);

  ExperimentResult out;
  out.method = method;
  out.results.reserve(frames.size());
  out.retrieval_us = cache->elapsed_us;
  out.refine_us.reserve(frames.size());

  std::optional<StpeEngine> engine;
  if (method == Method::stpe) engine.emplace(index, cfg.stpe);
  DeadReckoner reckoner(cfg.stpe.heading_interval_m);
  PfState pf;
  Vec2 last_pos;

  for (std::size_t t = 0; t < noisy.size(); ++t) {
    const auto& frame = noisy[t];
    const auto t0 = Clock::now();
    switch (method) {
      case Method::single:
        out.results.push_back(similarity_ranking(prefix(cache->hits[t], cfg.stpe.c_retrieve)));
        break;
      case Method::stpe:
        engine->push_frame(frame, prefix(cache->hits[t], cfg.stpe.c_retrieve));
        out.results.push_back(engine->rerank(cache->unit_queries[t]));
        break;
      case Method::pf: {
        const auto hits = prefix(cache->hits[t], depth);
        if (t == 0) {
          const auto& p = reckoner.start({}, frame.heading);
          last_pos = {p.x, p.y};
          pf = pf_init(hits, cfg.pf);
        } else {
          const auto& p = reckoner.step(frame.rel, frame.heading, frame.path_len_from_prev);
          pf_step(pf, {p.x - last_pos.x, p.y - last_pos.y}, hits, cfg.pf);
          last_pos = {p.x, p.y};
        }
        out.results.push_back(pf_rank(pf, hits, cfg.pf));
        break;
      }
    }
    out.refine_us.push_back(method == Method::single ? 0.0 : micros_since(t0));
  }

  std::vector<RankedResult> scored;
  std::vector<Vec2> gt;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!frames[t].gt) continue;
    scored.push_back(out.results[t]);
    gt.push_back(*frames[t].gt);
  }
  const auto positions = positions_of(index);
  out.recall.method = method;
  out.recall.threshold_m = cfg.threshold_m;
  out.recall.num_queries = gt.size();
  for (auto n : cfg.recall_ns) out.recall.recall_at[n] = recall_at_n(scored, gt, positions, n, cfg.threshold_m);
  out.timing = {mean(out.retrieval_us), percentile(out.retrieval_us, 95.0), mean(out.refine_us),
                percentile(out.refine_us, 95.0)};
  return out;
}

/// Result stream: one JSON object per query. Timings are written as zero when
/// include_timing is false so that repeated runs are byte-identical.
inline std::string result_stream(const ExperimentResult& r, std::span<const QueryFrame> frames,
                                 const DescriptorIndex& index, std::size_t n_report, bool include_timing = true) {
  std::string out;
  for (std::size_t t = 0; t < r.results.size(); ++t) {
    nlohmann::json top = nlohmann::json::array();
    const auto& entries = r.results[t].entries;
    for (std::size_t i = 0; i < std::min(n_report, entries.size()); ++i) {
      top.push_back({{"id", entries[i].submap_id}, {"sim", entries[i].similarity}, {"prob", entries[i].probability}});
    }
    nlohmann::json line{{"index", frames[t].index}, {"method", to_string(r.method)}, {"top", top}};
    if (frames[t].gt && !entries.empty()) {
      const auto row = index.row_of(entries.front().submap_id);
      if (row < index.size()) line["gt_distance_m"] = distance(index.position(row), *frames[t].gt);
    }
    line["elapsed_us"] = {{"retrieval", include_timing ? std::llround(r.retrieval_us[t]) : 0},
                          {"stpe", include_timing ? std::llround(r.refine_us[t]) : 0}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const RecallReport& r) {
  nlohmann::json at = nlohmann::json::object();
  for (const auto& [n, v] : r.recall_at) at[std::to_string(n)] = v;
  return {{"method", to_string(r.method)}, {"num_queries", r.num_queries}, {"threshold_m", r.threshold_m}, {"recall_at", at}};
}

inline nlohmann::json to_json(const TimingReport& t) {
  return {{"mean_retrieval_us", t.mean_retrieval_us},
          {"p95_retrieval_us", t.p95_retrieval_us},
          {"mean_refine_us", t.mean_refine_us},
          {"p95_refine_us", t.p95_refine_us}};
}

// ---------------------------------------------------------------------------
// Sweeps

enum class Axis { L, K, lambda, eps_yaw, eps_xy };

inline std::string to_string(Axis a) {
  switch (a) {
    case Axis::L: return "L";
    case Axis::K: return "K";
    case Axis::lambda: return "lambda";
    case Axis::eps_yaw: return "eps_yaw";
    case Axis::eps_xy: return "eps_xy";
  }
  return "?";
}

inline Axis axis_from_string(const std::string& s) {
  if (s == "L") return Axis::L;
  if (s == "K") return Axis::K;
  if (s == "lambda") return Axis::lambda;
  if (s == "eps_yaw") return Axis::eps_yaw;
  if (s == "eps_xy") return Axis::eps_xy;
  throw ValidationError("axis: unknown value '" + s + "'");
}

struct AxisValues {
  Axis axis = Axis::lambda;
  std::vector<double> values;  // eps_yaw in degrees, eps_xy in meters
};

/// One axis, or two for a full grid (every pair of values).
struct SweepSpec {
  std::vector<AxisValues> axes;
  std::size_t repeats = 3;
  Method method = Method::stpe;
  ExperimentConfig base;
  NoiseSpec base_noise;
  std::string experiment = "sweep";

  void validate() const {
    if (axes.empty() || axes.size() > 2) throw ValidationError("axes: one or two axes required");
    for (const auto& a : axes) {
      if (a.values.empty()) throw ValidationError("values: must not be empty for axis " + to_string(a.axis));
    }
    if (repeats < 1) throw ValidationError("repeats: must be at least 1");
  }
};

struct SweepRow {
  std::vector<double> point;  // one value per axis
  std::optional<std::size_t> repeat;  // nullopt for the mean row
  RecallReport recall;
  TimingReport timing;
};

struct SweepTable {
  std::string experiment;
  Method method = Method::stpe;
  std::vector<Axis> axes;
  std::vector<SweepRow> runs;   // one per point per repeat
  std::vector<SweepRow> means;  // one per point
};

inline void apply_axis(Axis axis, double value, ExperimentConfig& cfg, NoiseSpec& noise) {
  switch (axis) {
    case Axis::L: cfg.stpe.l_window = static_cast<std::size_t>(std::llround(value)); break;
    case Axis::K:
      cfg.stpe.k_particles = static_cast<std::size_t>(std::llround(value));
      cfg.stpe.c_retrieve = std::max(cfg.stpe.c_retrieve, cfg.stpe.k_particles);
      break;
    case Axis::lambda: cfg.stpe.lambda_rate = value; break;
    case Axis::eps_yaw: noise.eps_yaw = deg2rad(value); break;
    case Axis::eps_xy: noise.eps_xy = value; break;
  }
}

inline std::string format_value(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

/// Runs every point of the sweep `repeats` times with distinct derived noise
/// and particle-filter seeds. Points may run on `jobs` threads; rows come back
/// in point-major order regardless.
inline SweepTable sweep(const SweepSpec& spec, const DescriptorIndex& index, std::span<const QueryFrame> frames,
                        std::size_t jobs = 1) {
  spec.validate();
  std::vector<std::vector<double>> points{{}};
  for (const auto& a : spec.axes) {
    std::vector<std::vector<double>> next;
    for (const auto& p : points) {
      for (double v : a.values) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }

  struct Task {
    std::size_t point;
    std::size_t repeat;
    ExperimentConfig cfg;
    NoiseSpec noise;
  };
  std::vector<Task> tasks;
  std::size_t depth = 0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (std::size_t r = 0; r < spec.repeats; ++r) {
      Task t{p, r, spec.base, spec.base_noise};
      for (std::size_t a = 0; a < spec.axes.size(); ++a) apply_axis(spec.axes[a].axis, points[p][a], t.cfg, t.noise);
      t.noise.seed = synth::mix_seed(spec.base_noise.seed, r);
      t.cfg.pf.seed = synth::mix_seed(spec.base.pf.seed, r);
      t.cfg.stpe.validate();
      depth = std::max(depth, t.cfg.retrieval_depth(spec.method));
      tasks.push_back(std::move(t));
    }
  }
  const auto cache = compute_retrievals(index, frames, depth);

  std::vector<SweepRow> runs(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& t = tasks[i];
      const auto res = run_experiment(index, frames, spec.method, t.cfg, t.noise, &cache);
      runs[i] = {points[t.point], t.repeat, res.recall, res.timing};
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, tasks.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SweepTable table;
  table.experiment = spec.experiment;
  table.method = spec.method;
  for (const auto& a : spec.axes) table.axes.push_back(a.axis);
  table.runs = runs;
  for (std::size_t p = 0; p < points.size(); ++p) {
    SweepRow m;
    m.point = points[p];
    m.recall.method = spec.method;
    m.recall.threshold_m = spec.base.threshold_m;
    const double k = static_cast<double>(spec.repeats);
    for (std::size_t r = 0; r < spec.repeats; ++r) {
      const auto& row = runs[p * spec.repeats + r];
      m.recall.num_queries = row.recall.num_queries;
      for (const auto& [n, v] : row.recall.recall_at) m.recall.recall_at[n] += v / k;
      m.timing.mean_retrieval_us += row.timing.mean_retrieval_us / k;
      m.timing.p95_retrieval_us += row.timing.p95_retrieval_us / k;
      m.timing.mean_refine_us += row.timing.mean_refine_us / k;
      m.timing.p95_refine_us += row.timing.p95_refine_us / k;
    }
    table.means.push_back(std::move(m));
  }
  return table;
}

inline std::string axis_label(const SweepTable& t) {
  std::string s;
  for (std::size_t a = 0; a < t.axes.size(); ++a) s += (a ? "|" : "") + to_string(t.axes[a]);
  return s;
}

inline std::string point_label(const std::vector<double>& point) {
  std::string s;
  for (std::size_t a = 0; a < point.size(); ++a) s += (a ? "|" : "") + format_value(point[a]);
  return s;
}

inline constexpr const char* kCsvHeader =
    "method,axis,value,repeat,recall@1,recall@5,recall@10,recall@30,mean_refine_us,p95_refine_us";

// One row per sweep point (means over repeats); the repeat column holds "mean".
// Timing columns are written as 0 when include_timing is false.
inline std::string to_csv(const SweepTable& t, bool include_timing = true) {
  std::ostringstream ss;
  ss << kCsvHeader << '\n';
  auto at = [](const RecallReport& r, std::size_t n) {
    auto it = r.recall_at.find(n);
    return it == r.recall_at.end() ? std::string() : format_value(it->second);
  };
  for (const auto& row : t.means) {
    ss << to_string(t.method) << ',' << axis_label(t) << ',' << point_label(row.point) << ",mean," << at(row.recall, 1)
       << ',' << at(row.recall, 5) << ',' << at(row.recall, 10) << ',' << at(row.recall, 30) << ','
       << format_value(include_timing ? row.timing.mean_refine_us : 0.0) << ','
       << format_value(include_timing ? row.timing.p95_refine_us : 0.0) << '\n';
  }
  return ss.str();
}

inline nlohmann::json to_json(const SweepTable& t) {
  auto row_json = [](const SweepRow& r) {
    nlohmann::json j{{"point", r.point}, {"recall", to_json(r.recall)}, {"timing", to_json(r.timing)}};
    if (r.repeat) j["repeat"] = *r.repeat;
    return j;
  };
  nlohmann::json axes = nlohmann::json::array();
  for (auto a : t.axes) axes.push_back(to_string(a));
  nlohmann::json runs = nlohmann::json::array(), means = nlohmann::json::array();
  for (const auto& r : t.runs) runs.push_back(row_json(r));
  for (const auto& r : t.means) means.push_back(row_json(r));
  return {{"experiment", t.experiment}, {"method", to_string(t.method)}, {"axes", axes}, {"runs", runs}, {"means", means}};
}

// x/y series of recall@n against the first axis, one "x y" pair per line.
inline std::string plot_series(const SweepTable& t, std::size_t n) {
  std::ostringstream ss;
  for (const auto& row : t.means) {
    auto it = row.recall.recall_at.find(n);
    if (it == row.recall.recall_at.end()) continue;
    ss << point_label(row.point) << ' ' << format_value(it->second) << '\n';
  }
  return ss.str();
}

}  // namespace stpe::eval
