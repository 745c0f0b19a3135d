// Acceptance runner. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Pass criterion numbers as arguments to run a subset.

#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "stpe/eval.hpp"

using namespace stpe;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Runtime budgets are part of each criterion.
Verdict within_budget(Verdict v, Clock::time_point t0, double budget_s) {
  const double s = seconds_since(t0);
  v.detail += fmt(" [%.1f s, budget %.0f s]", s, budget_s);
  v.pass = v.pass && s < budget_s;
  return v;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

// ---------------------------------------------------------------------------

Verdict c1_rect_probability() {
  const auto t0 = Clock::now();
  oracle::Rng rng(1001);
  double worst = 0.0;
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const double u = rng.uniform(-500, 500), v = rng.uniform(-500, 500), r = rng.uniform(5, 60);
    const auto d = oracle::random_mixture(rng, 8, kDefaultSigmaFloorM, 50, u, v, r + 60);
    const double e = rel_err(rect_probability(d, u, v, r), oracle::adaptive_simpson_rect(d, u, v, r));
    worst = std::max(worst, e);
    bad += e > 1e-6;
  }
  return within_budget({bad == 0, fmt("1000 mixtures, max relative error %.2e, %zu above 1e-6", worst, bad)}, t0, 10);
}

Verdict c2_gmm_fit() {
  const auto t0 = Clock::now();
  oracle::Rng rng(1002);
  double worst = 0.0;
  std::size_t singletons = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<std::vector<Point2>> cs(rng.between(1, 8));
    for (auto& c : cs) {
      const double cx = rng.uniform(-5000, 5000), cy = rng.uniform(-5000, 5000);
      const double spread = rng.uniform(0.5, 40);
      const auto n = rng.uniform(0, 1) < 0.3 ? 1 : rng.between(2, 40);
      singletons += n == 1;
      for (std::size_t i = 0; i < n; ++i) c.push_back({cx + rng.normal(0, spread), cy + rng.normal(0, spread), 0});
    }
    const auto got = fit_components(ClusterSet{cs});
    const auto want = oracle::naive_fit(cs, kDefaultSigmaFloorM);
    if (got.components.size() != want.components.size()) return {false, fmt("component count differs at set %d", t)};
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const auto &a = got.components[k], &b = want.components[k];
      for (auto [x, y] : {std::pair{a.amplitude, b.amplitude}, {a.mu_x, b.mu_x}, {a.mu_y, b.mu_y},
                          {a.sigma_x, b.sigma_x}, {a.sigma_y, b.sigma_y}}) {
        worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
      }
    }
  }
  return within_budget({worst <= 1e-12, fmt("500 cluster sets (%zu singleton clusters), max error %.2e", singletons, worst)},
                       t0, 5);
}

Verdict c3_dbscan() {
  const auto t0 = Clock::now();
  oracle::Rng rng(1003);
  std::size_t bad = 0;
  for (int t = 0; t < 200; ++t) {
    const auto n = t == 0 ? 500 : rng.between(1, 500);
    const double side = rng.uniform(50, 1500), r = rng.uniform(5, 60);
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(0, side), rng.uniform(0, side), static_cast<std::int64_t>(i)});
    bad += oracle::as_partition(dbscan(pts, r)) != oracle::union_find_partition(pts, r);
  }
  return within_budget({bad == 0, fmt("200 instances, %zu partitions differ from union-find", bad)}, t0, 10);
}

Verdict c4_retrieval() {
  const auto t0 = Clock::now();
  oracle::Rng rng(1004);
  std::size_t bad = 0, queries = 0;
  for (int t = 0; t < 100; ++t) {
    const auto n = t == 0 ? 5000 : rng.between(1, 5000);
    const auto dim = t == 0 ? 512 : rng.between(1, 512);
    auto recs = oracle::random_database(rng, n, dim);
    // Exact duplicates exercise the id tie-break.
    if (t % 4 == 0) {
      for (std::size_t i = 1; i < n; i += 10) recs[i].descriptor = recs[i - 1].descriptor;
    }
    const auto index = DescriptorIndex::build(recs);
    for (int k = 0; k < 3; ++k) {
      const auto c = rng.between(1, n + 10);
      const auto q = k == 0 ? recs[rng.index(n)].descriptor : oracle::random_descriptor(rng, dim);
      const auto hits = index.query_top_c(q, c);
      const auto want = oracle::exhaustive_top_c(recs, q, c);
      bool same = hits.size() == want.size();
      for (std::size_t i = 0; same && i < hits.size(); ++i) {
        same = hits[i].submap_id == want[i].first && hits[i].similarity == want[i].second;
      }
      bad += !same;
      ++queries;
    }
  }
  return within_budget({bad == 0, fmt("100 databases, %zu of %zu queries differ from exhaustive scan", bad, queries)}, t0,
                       30);
}

// ---------------------------------------------------------------------------

synth::WorldSpec acceptance_world(std::uint64_t seed) {
  synth::WorldSpec w;
  w.extent_x_m = w.extent_y_m = 2000.0;
  w.ambiguity_level = 0.6;
  w.descriptor_noise_sigma = 0.15;
  w.trajectory_length_m = 2500.0;
  w.seed = seed;
  return w;
}

struct Scenario {
  synth::GeneratedScenario data;
  DescriptorIndex index;
  eval::RetrievalCache cache;

  explicit Scenario(std::uint64_t seed)
      : data(synth::generate_scenario(acceptance_world(seed))), index(DescriptorIndex::build(data.database)) {
    cache = eval::compute_retrievals(index, data.queries, eval::ExperimentConfig{}.retrieval_depth(eval::Method::pf));
  }

  eval::ExperimentResult run(eval::Method m, const eval::ExperimentConfig& cfg = {}, const NoiseSpec& noise = {}) const {
    return eval::run_experiment(index, data.queries, m, cfg, noise, &cache);
  }
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

inline constexpr std::array<double, 5> kYawGrid{0, 5, 10, 15, 30};
inline constexpr std::array<double, 5> kXyGrid{0, 1, 4, 9, 16};
inline constexpr std::size_t kRepeats = 3;

struct TrendRun {
  std::array<std::array<double, 3>, 3> r1{};  // [seed][single, stpe, pf]
  std::array<std::array<double, 5>, 5> grid{};  // [yaw][xy], mean over repeats
  double r1_lambda03 = 0, r1_lambda10 = 0, refine_lambda03_us = 0, refine_lambda10_us = 0;
  std::vector<std::uint64_t> streams;
  double c5_s = 0, c6_s = 0, c7_s = 0;
};

// Criteria 5 to 7 on the acceptance scenario. Every result stream is hashed
// with timings zeroed so that two runs can be compared for determinism.
TrendRun trend_suite(bool c5, bool c6, bool c7) {
  TrendRun out;
  auto record = [&](const Scenario& s, const eval::ExperimentResult& r) {
    out.streams.push_back(fnv1a(eval::result_stream(r, s.data.queries, s.index, 30, false)));
  };
  auto t0 = Clock::now();
  const Scenario first(1);
  if (c5) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto other = seed == 1 ? std::optional<Scenario>() : std::optional<Scenario>(seed);
      const Scenario& s = seed == 1 ? first : *other;
      const eval::Method methods[] = {eval::Method::single, eval::Method::stpe, eval::Method::pf};
      for (std::size_t m = 0; m < 3; ++m) {
        const auto r = s.run(methods[m]);
        out.r1[seed - 1][m] = r.recall.recall_at.at(1);
        record(s, r);
      }
    }
    out.c5_s = seconds_since(t0);
  }
  if (c6) {
    t0 = Clock::now();
    for (std::size_t y = 0; y < kYawGrid.size(); ++y) {
      for (std::size_t x = 0; x < kXyGrid.size(); ++x) {
        for (std::size_t rep = 0; rep < kRepeats; ++rep) {
          const NoiseSpec noise{deg2rad(kYawGrid[y]), kXyGrid[x], synth::mix_seed(0, rep)};
          const auto r = first.run(eval::Method::stpe, {}, noise);
          out.grid[y][x] += r.recall.recall_at.at(1) / static_cast<double>(kRepeats);
          record(first, r);
        }
      }
    }
    out.c6_s = seconds_since(t0);
  }
  if (c7) {
    t0 = Clock::now();
    eval::ExperimentConfig cfg;
    cfg.stpe.lambda_rate = 0.3;
    const auto a = first.run(eval::Method::stpe, cfg);
    cfg.stpe.lambda_rate = 1.0;
    const auto b = first.run(eval::Method::stpe, cfg);
    out.r1_lambda03 = a.recall.recall_at.at(1);
    out.r1_lambda10 = b.recall.recall_at.at(1);
    out.refine_lambda03_us = a.timing.mean_refine_us;
    out.refine_lambda10_us = b.timing.mean_refine_us;
    record(first, a);
    record(first, b);
    out.c7_s = seconds_since(t0);
  }
  return out;
}

Verdict c5_benefit(const TrendRun& t) {
  bool ok = t.c5_s < 120;
  std::string detail;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& r = t.r1[s];
    const double gap = 100.0 * (r[1] - r[0]);
    ok = ok && gap >= 20.0 && r[1] > r[2] && r[2] > r[0];
    detail += fmt("seed %zu single %.1f / pf %.1f / stpe %.1f (gap %+.1f); ", s + 1, 100 * r[0], 100 * r[2], 100 * r[1], gap);
  }
  detail += fmt("[%.1f s, budget 120 s]", t.c5_s);
  return {ok, detail};
}

Verdict c6_noise(const TrendRun& t) {
  // Each step along an axis may rise by at most the jitter tolerance.
  double worst_rise = -1.0;
  std::string where;
  auto step = [&](double before, double after, std::string label) {
    const double rise = 100.0 * (after - before);
    if (rise > worst_rise) {
      worst_rise = rise;
      where = std::move(label);
    }
  };
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 5; ++x) {
      if (x + 1 < 5) step(t.grid[y][x], t.grid[y][x + 1], fmt("xy %g->%g at yaw %g", kXyGrid[x], kXyGrid[x + 1], kYawGrid[y]));
      if (y + 1 < 5) step(t.grid[y][x], t.grid[y + 1][x], fmt("yaw %g->%g at xy %g", kYawGrid[y], kYawGrid[y + 1], kXyGrid[x]));
    }
  }
  const bool ok = worst_rise <= 2.0 && t.c6_s < 1200;
  return {ok, fmt("R@1 %.1f at (0,0), %.1f at (30,16); largest step rise %+.2f points (%s) [%.1f s, budget 1200 s]",
                  100 * t.grid[0][0], 100 * t.grid[4][4], worst_rise, where.c_str(), t.c6_s)};
}

Verdict c7_lambda(const TrendRun& t) {
  const double diff = 100.0 * std::abs(t.r1_lambda03 - t.r1_lambda10);
  const bool ok = diff <= 1.5 && t.refine_lambda03_us < t.refine_lambda10_us && t.c7_s < 300;
  return {ok, fmt("R@1 %.1f at 0.3 vs %.1f at 1.0 (diff %.2f points); refine %.2f ms vs %.2f ms [%.1f s, budget 300 s]",
                  100 * t.r1_lambda03, 100 * t.r1_lambda10, diff, t.refine_lambda03_us / 1000, t.refine_lambda10_us / 1000,
                  t.c7_s)};
}

Verdict c8_runtime() {
  const auto t0 = Clock::now();
  auto w = acceptance_world(1);
  w.extent_x_m = w.extent_y_m = 6150.0;
  const auto s = synth::generate_scenario(w);
  const auto index = DescriptorIndex::build(s.database);
  const auto r = eval::run_experiment(index, s.queries, eval::Method::stpe, eval::ExperimentConfig{});
  const double ms = r.timing.mean_refine_us / 1000.0;
  return within_budget({ms < 100.0 && index.size() >= 55000,
                        fmt("%zu submaps, %zu queries, mean refine %.2f ms, p95 %.2f ms (ceiling 100, target 50)",
                            index.size(), s.queries.size(), ms, r.timing.p95_refine_us / 1000.0)},
                       t0, 300);
}

Verdict c9_infonce() {
  oracle::Rng rng(1009);
  bool single_zero = true;
  for (int t = 0; t < 20; ++t) {
    const auto v = normalized(oracle::random_descriptor(rng, 1 + rng.index(64)));
    const std::vector<std::vector<float>> q{v}, p{v};
    single_zero = single_zero && symmetric_infonce(q, p, rng.uniform(0.01, 1.0)) == 0.0;
  }

  double worst_hand = 0.0;
  {
    const std::vector<std::vector<float>> q{{1, 0}, {0, 1}};
    worst_hand = std::max(worst_hand, std::abs(symmetric_infonce(q, q, 0.1) - 2.0 * std::log1p(std::exp(-10.0))));
    const float hf = static_cast<float>(std::sqrt(0.5));
    const std::vector<std::vector<float>> a{{1, 0}, {1, 0}}, b{{hf, hf}, {hf, hf}};
    worst_hand = std::max(worst_hand, std::abs(symmetric_infonce(a, b, 0.1) - 2.0 * std::log(2.0)));
    // S = [[1, h], [0, h]] at tau 1.
    const double h = hf;
    const std::vector<std::vector<float>> p{{1, 0}, {hf, hf}};
    const double want =
        (std::log1p(std::exp(h - 1)) + std::log1p(std::exp(-h)) + std::log1p(std::exp(-1.0)) + std::log(2.0)) / 2.0;
    worst_hand = std::max(worst_hand, std::abs(symmetric_infonce(q, p, 1.0) - want));
  }

  double worst_perm = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.index(16), dim = 2 + rng.index(32);
    std::vector<std::vector<float>> q, p;
    for (std::size_t i = 0; i < n; ++i) {
      q.push_back(normalized(oracle::random_descriptor(rng, dim)));
      p.push_back(normalized(oracle::random_descriptor(rng, dim)));
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.g);
    std::vector<std::vector<float>> qp, pp;
    for (auto i : perm) {
      qp.push_back(q[i]);
      pp.push_back(p[i]);
    }
    const double tau = rng.uniform(0.05, 1.0);
    worst_perm = std::max(worst_perm, std::abs(symmetric_infonce(q, p, tau) - symmetric_infonce(qp, pp, tau)));
  }
  return {single_zero && worst_hand <= 1e-9 && worst_perm <= 1e-12,
          fmt("single pair zero: %s; 2x2 max error %.2e; permutation max error %.2e", single_zero ? "yes" : "no",
              worst_hand, worst_perm)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto on = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

  int failures = 0;
  auto report = [&](int c, const char* name, const Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << "  C" << c << " " << name << ": " << v.detail << std::endl;
    failures += !v.pass;
  };

  if (on(1)) report(1, "rectangle probability vs quadrature", c1_rect_probability());
  if (on(2)) report(2, "mixture fit vs naive fit", c2_gmm_fit());
  if (on(3)) report(3, "DBSCAN vs union-find", c3_dbscan());
  if (on(4)) report(4, "top-C vs exhaustive scan", c4_retrieval());

  const bool trends = on(5) || on(6) || on(7) || on(10);
  if (trends) {
    const auto first = trend_suite(on(5) || on(10), on(6) || on(10), on(7) || on(10));
    if (on(5)) report(5, "STPE benefit over single and PF", c5_benefit(first));
    if (on(6)) report(6, "noise monotonicity", c6_noise(first));
    if (on(7)) report(7, "sampling rate efficiency", c7_lambda(first));
    if (on(8)) report(8, "refinement runtime on 60k submaps", c8_runtime());
    if (on(9)) report(9, "InfoNCE", c9_infonce());
    if (on(10)) {
      const auto t0 = Clock::now();
      const auto second = trend_suite(true, true, true);
      std::size_t differ = 0;
      for (std::size_t i = 0; i < first.streams.size(); ++i) differ += first.streams[i] != second.streams[i];
      report(10, "determinism of criteria 5 to 7",
             {first.streams.size() == second.streams.size() && differ == 0,
              fmt("%zu result streams rerun, %zu differ [%.1f s]", first.streams.size(), differ, seconds_since(t0))});
    }
  } else {
    if (on(8)) report(8, "refinement runtime on 60k submaps", c8_runtime());
    if (on(9)) report(9, "InfoNCE", c9_infonce());
  }

  std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
