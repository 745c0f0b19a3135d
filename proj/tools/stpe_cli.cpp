// stpe_cli: generate synthetic scenarios, run single/STPE/PF localization over
// a query sequence, and sweep parameters.
//
// Exit codes: 0 success, 1 I/O, 2 validation or dimension mismatch, 64 usage.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stpe/config.hpp"
#include "stpe/descriptor_index.hpp"
#include "stpe/errors.hpp"
#include "stpe/eval.hpp"
#include "stpe/frames.hpp"
#include "stpe/submapdb.hpp"
#include "stpe/synthworld.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;
constexpr int kExitUsage = 64;

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw stpe::IoError("cannot write " + p.string());
  out << text;
  if (!out) throw stpe::IoError("write failed for " + p.string());
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw stpe::IoError("cannot create directory " + p.string());
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("STPE_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const auto seed = std::strtoull(v, &end, 10);
  if (*end != '\0') throw stpe::ValidationError("STPE_SEED: expected a non-negative integer");
  return seed;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string spec_file;
  std::string out_dir;
  bool binary = false;
};

int cmd_gen(const GenArgs& a) {
  auto spec = stpe::config::world_from_json(stpe::config::load_json(a.spec_file));
  if (auto s = env_seed()) spec.seed = *s;
  const auto scenario = stpe::synth::generate_scenario(spec);
  const fs::path out(a.out_dir);
  ensure_dir(out);
  const std::string db_name = a.binary ? "submaps.smdb" : "submaps.jsonl";
  stpe::submapdb::save((out / db_name).string(), scenario.database,
                       a.binary ? stpe::submapdb::Encoding::binary : stpe::submapdb::Encoding::jsonl);
  stpe::queryseq::save((out / "queries.jsonl").string(), scenario.queries);
  const json manifest{{"version", 1},
                      {"seed", spec.seed},
                      {"world", stpe::config::to_json(spec)},
                      {"submaps", db_name},
                      {"queries", "queries.jsonl"},
                      {"submap_count", scenario.database.size()},
                      {"query_count", scenario.queries.size()}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << scenario.database.size() << " submaps and " << scenario.queries.size() << " queries to "
            << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct Overrides {
  std::optional<std::size_t> k, c, l, result_size;
  std::optional<double> lambda, radius, window, sigma_floor, eps_yaw_deg, eps_xy;
  std::optional<std::string> scoring_mode;
  std::optional<std::uint64_t> noise_seed, pf_seed;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--K", o.k, "Particles per query used for clustering");
  cmd->add_option("--C", o.c, "Candidates retrieved per query");
  cmd->add_option("--L", o.l, "Maximum frames in the window");
  cmd->add_option("--lambda", o.lambda, "Fraction of window frames used");
  cmd->add_option("--radius", o.radius, "Rectangle half-side r in meters");
  cmd->add_option("--window", o.window, "Window path length in meters");
  cmd->add_option("--sigma-floor", o.sigma_floor, "Minimum component sigma in meters");
  cmd->add_option("--result-size", o.result_size, "Entries kept per ranked result");
  cmd->add_option("--scoring-mode", o.scoring_mode, "database_wide or candidate_set")
      ->check(CLI::IsMember({"database_wide", "candidate_set"}));
  cmd->add_option("--eps-yaw-deg", o.eps_yaw_deg, "Yaw noise half-width in degrees");
  cmd->add_option("--eps-xy", o.eps_xy, "Translation noise magnitude in meters");
  cmd->add_option("--noise-seed", o.noise_seed, "Seed of the odometry noise");
  cmd->add_option("--pf-seed", o.pf_seed, "Seed of the particle filter jitter");
}

void apply(const Overrides& o, stpe::eval::ExperimentConfig& cfg, stpe::NoiseSpec& noise) {
  auto& s = cfg.stpe;
  if (o.k) s.k_particles = *o.k;
  if (o.c) s.c_retrieve = *o.c;
  if (o.l) s.l_window = *o.l;
  if (o.lambda) s.lambda_rate = *o.lambda;
  if (o.radius) s.radius_m = *o.radius;
  if (o.window) s.window_m = *o.window;
  if (o.sigma_floor) s.sigma_floor_m = *o.sigma_floor;
  if (o.result_size) s.result_size = *o.result_size;
  if (o.scoring_mode) s.scoring_mode = stpe::scoring_mode_from_string(*o.scoring_mode);
  if (o.eps_yaw_deg) noise.eps_yaw = stpe::deg2rad(*o.eps_yaw_deg);
  if (o.eps_xy) noise.eps_xy = *o.eps_xy;
  if (o.noise_seed) noise.seed = *o.noise_seed;
  if (o.pf_seed) cfg.pf.seed = *o.pf_seed;
  if (!(noise.eps_yaw >= 0.0) || !(noise.eps_xy >= 0.0)) throw stpe::ValidationError("noise: must be non-negative");
  s.validate();
  cfg.pf.validate();
}

struct RunArgs {
  std::string db_file;
  std::string query_file;
  std::string method = "stpe";
  std::string config_file;
  std::string noise_file;
  std::string out_dir = ".";
  bool deterministic = false;
  Overrides overrides;
};

int cmd_run(const RunArgs& a) {
  stpe::eval::ExperimentConfig cfg;
  stpe::NoiseSpec noise;
  if (!a.config_file.empty()) cfg = stpe::config::experiment_from_json(stpe::config::load_json(a.config_file));
  if (!a.noise_file.empty()) noise = stpe::config::noise_from_json(stpe::config::load_json(a.noise_file));
  apply(a.overrides, cfg, noise);
  const auto method = stpe::eval::method_from_string(a.method);

  const auto records = stpe::submapdb::load(a.db_file);
  const auto frames = stpe::queryseq::load(a.query_file);
  const auto index = stpe::DescriptorIndex::build(records);
  if (!frames.empty() && frames.front().descriptor.size() != index.dimension()) {
    throw stpe::DimensionMismatch("query descriptors have dimension " + std::to_string(frames.front().descriptor.size()) +
                                  ", database has " + std::to_string(index.dimension()));
  }

  const auto result = stpe::eval::run_experiment(index, frames, method, cfg, noise);
  const fs::path out(a.out_dir);
  ensure_dir(out);
  const std::string stem = stpe::eval::to_string(method);
  write_text(out / ("results-" + stem + ".jsonl"),
             stpe::eval::result_stream(result, frames, index, cfg.n_report, !a.deterministic));
  json report{{"method", stem},
              {"recall", stpe::eval::to_json(result.recall)},
              {"config", stpe::config::to_json(cfg)},
              {"noise", stpe::config::to_json(noise)}};
  if (!a.deterministic) report["timing"] = stpe::eval::to_json(result.timing);
  write_text(out / ("report-" + stem + ".json"), report.dump(2) + "\n");

  std::cout << stem << ": " << result.recall.num_queries << " queries";
  for (const auto& [n, v] : result.recall.recall_at) std::cout << "  R@" << n << " " << v;
  std::cout << "  refine mean " << result.timing.mean_refine_us / 1000.0 << " ms\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string spec_file;
  std::string scenario;
  std::string out_dir = ".";
  std::size_t jobs = 1;
  bool deterministic = false;
  bool plot_data = false;
};

// A scenario is a directory holding manifest.json, or the manifest itself.
std::pair<fs::path, fs::path> scenario_files(const std::string& arg) {
  fs::path manifest = arg;
  if (fs::is_directory(manifest)) manifest /= "manifest.json";
  const auto m = stpe::config::load_json(manifest.string());
  if (!m.is_object() || !m.contains("submaps") || !m.contains("queries") || !m["submaps"].is_string() ||
      !m["queries"].is_string()) {
    throw stpe::ValidationError("manifest: expected string fields submaps and queries");
  }
  const auto dir = manifest.parent_path();
  return {dir / m["submaps"].get<std::string>(), dir / m["queries"].get<std::string>()};
}

int cmd_sweep(const SweepArgs& a) {
  const auto spec = stpe::config::sweep_from_json(stpe::config::load_json(a.spec_file));
  const auto [db_path, query_path] = scenario_files(a.scenario);
  const auto index = stpe::DescriptorIndex::build(stpe::submapdb::load(db_path.string()));
  const auto frames = stpe::queryseq::load(query_path.string());

  const auto table = stpe::eval::sweep(spec, index, frames, a.jobs);
  std::string axis_name;
  for (std::size_t i = 0; i < table.axes.size(); ++i) axis_name += (i ? "-" : "") + stpe::eval::to_string(table.axes[i]);
  const std::string base = spec.experiment + "-" + axis_name + "-" + (a.deterministic ? "deterministic" : utc_stamp());
  const fs::path out(a.out_dir);
  ensure_dir(out);

  auto json_table = stpe::eval::to_json(table);
  if (a.deterministic) {
    // Timing varies run to run; pinned output keeps recall only.
    for (auto* rows : {&json_table["runs"], &json_table["means"]}) {
      for (auto& r : *rows) r.erase("timing");
    }
  }
  write_text(out / (base + ".csv"), stpe::eval::to_csv(table, !a.deterministic));
  write_text(out / (base + ".json"), json_table.dump(2) + "\n");
  if (a.plot_data) {
    for (auto n : spec.base.recall_ns) {
      write_text(out / (base + "-recall@" + std::to_string(n) + ".dat"), stpe::eval::plot_series(table, n));
    }
  }
  std::cout << "wrote " << (out / (base + ".csv")).string() << " (" << table.means.size() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial-temporal particle estimation for sequence place recognition"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic scenario");
  g->add_option("spec", gen.spec_file, "World spec JSON")->required();
  g->add_option("out_dir", gen.out_dir, "Output directory")->required();
  g->add_flag("--binary", gen.binary, "Write the database in the binary encoding");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Localize a query sequence against a database");
  r->add_option("db", run.db_file, "Submap database (JSONL or binary)")->required();
  r->add_option("queries", run.query_file, "Query sequence JSONL")->required();
  r->add_option("--method", run.method, "single, stpe or pf")->check(CLI::IsMember({"single", "stpe", "pf"}));
  r->add_option("--config", run.config_file, "Run config JSON");
  r->add_option("--noise", run.noise_file, "Odometry noise JSON");
  r->add_option("--out", run.out_dir, "Output directory");
  r->add_flag("--deterministic", run.deterministic, "Zero timing fields so outputs are reproducible");
  add_overrides(r, run.overrides);

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Sweep one or two parameters");
  s->add_option("spec", sw.spec_file, "Sweep spec JSON")->required();
  s->add_option("scenario", sw.scenario, "Scenario directory or manifest")->required();
  s->add_option("--out", sw.out_dir, "Output directory");
  s->add_option("--jobs", sw.jobs, "Parallel sweep workers")->check(CLI::PositiveNumber);
  s->add_flag("--deterministic", sw.deterministic, "Pin report names and drop timings");
  s->add_flag("--report-plot-data", sw.plot_data, "Write x/y series per recall level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*r) return cmd_run(run);
    if (*s) return cmd_sweep(sw);
  } catch (const stpe::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const stpe::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
