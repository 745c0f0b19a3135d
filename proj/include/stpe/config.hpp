#pragma once

// JSON mapping for every configuration type. Readers start from defaults (or
// a given base), reject unknown keys, and name the offending field on error.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "stpe/errors.hpp"
#include "stpe/eval.hpp"
#include "stpe/motion.hpp"
#include "stpe/pf_baseline.hpp"
#include "stpe/stpe.hpp"
#include "stpe/synthworld.hpp"

namespace stpe::config {

using nlohmann::json;

namespace detail {

inline std::string path(std::string_view ctx, std::string_view key) {
  return ctx.empty() ? std::string(key) : std::string(ctx) + "." + std::string(key);
}

inline void require_object(const json& j, std::string_view ctx) {
  if (!j.is_object()) throw ValidationError((ctx.empty() ? std::string("config") : std::string(ctx)) + ": expected an object");
}

inline void reject_unknown(const json& j, std::string_view ctx, std::initializer_list<std::string_view> known) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ValidationError(path(ctx, key) + ": unknown field");
  }
}

inline void read(const json& j, std::string_view ctx, std::string_view key, double& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number()) throw ValidationError(path(ctx, key) + ": expected a number");
  out = it->get<double>();
}

inline void read(const json& j, std::string_view ctx, std::string_view key, std::size_t& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    throw ValidationError(path(ctx, key) + ": expected a non-negative integer");
  }
  out = it->get<std::size_t>();
}

inline void read(const json& j, std::string_view ctx, std::string_view key, int& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer()) throw ValidationError(path(ctx, key) + ": expected an integer");
  out = it->get<int>();
}

inline void read_seed(const json& j, std::string_view ctx, std::string_view key, std::uint64_t& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() && it->get<std::int64_t>() < 0)) {
    throw ValidationError(path(ctx, key) + ": expected a non-negative integer");
  }
  out = it->get<std::uint64_t>();
}

inline void read(const json& j, std::string_view ctx, std::string_view key, std::string& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_string()) throw ValidationError(path(ctx, key) + ": expected a string");
  out = it->get<std::string>();
}

// Re-throws a validate() failure with the section name in front.
template <class F>
void checked(std::string_view ctx, F&& f) {
  try {
    f();
  } catch (const DimensionMismatch&) {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(ctx.empty() ? std::string(e.what()) : std::string(ctx) + "." + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline StpeConfig stpe_from_json(const json& j, StpeConfig c = {}, std::string_view ctx = "stpe") {
  detail::require_object(j, ctx);
  detail::reject_unknown(j, ctx,
                         {"k_particles", "c_retrieve", "l_window", "lambda_rate", "radius_m", "window_m", "sigma_floor_m",
                          "scoring_mode", "prune_sigma_mult", "heading_interval_m", "result_size"});
  detail::read(j, ctx, "k_particles", c.k_particles);
  detail::read(j, ctx, "c_retrieve", c.c_retrieve);
  detail::read(j, ctx, "l_window", c.l_window);
  detail::read(j, ctx, "lambda_rate", c.lambda_rate);
  detail::read(j, ctx, "radius_m", c.radius_m);
  detail::read(j, ctx, "window_m", c.window_m);
  detail::read(j, ctx, "sigma_floor_m", c.sigma_floor_m);
  detail::read(j, ctx, "prune_sigma_mult", c.prune_sigma_mult);
  detail::read(j, ctx, "heading_interval_m", c.heading_interval_m);
  detail::read(j, ctx, "result_size", c.result_size);
  if (j.contains("scoring_mode")) {
    std::string mode;
    detail::read(j, ctx, "scoring_mode", mode);
    detail::checked(ctx, [&] { c.scoring_mode = scoring_mode_from_string(mode); });
  }
  detail::checked(ctx, [&] { c.validate(); });
  return c;
}

inline json to_json(const StpeConfig& c) {
  return {{"k_particles", c.k_particles},       {"c_retrieve", c.c_retrieve},
          {"l_window", c.l_window},             {"lambda_rate", c.lambda_rate},
          {"radius_m", c.radius_m},             {"window_m", c.window_m},
          {"sigma_floor_m", c.sigma_floor_m},   {"scoring_mode", to_string(c.scoring_mode)},
          {"prune_sigma_mult", c.prune_sigma_mult}, {"heading_interval_m", c.heading_interval_m},
          {"result_size", c.result_size}};
}

inline PfConfig pf_from_json(const json& j, PfConfig c = {}, std::string_view ctx = "pf") {
  detail::require_object(j, ctx);
  detail::reject_unknown(j, ctx, {"k_init", "retain_radius_m", "k_topk", "jitter_m", "seed"});
  detail::read(j, ctx, "k_init", c.k_init);
  detail::read(j, ctx, "retain_radius_m", c.retain_radius_m);
  detail::read(j, ctx, "k_topk", c.k_topk);
  detail::read(j, ctx, "jitter_m", c.jitter_m);
  detail::read_seed(j, ctx, "seed", c.seed);
  detail::checked(ctx, [&] { c.validate(); });
  return c;
}

inline json to_json(const PfConfig& c) {
  return {{"k_init", c.k_init}, {"retain_radius_m", c.retain_radius_m}, {"k_topk", c.k_topk}, {"jitter_m", c.jitter_m}, {"seed", c.seed}};
}

// Yaw is written in degrees; the in-memory NoiseSpec holds radians.
inline NoiseSpec noise_from_json(const json& j, NoiseSpec n = {}, std::string_view ctx = "noise") {
  detail::require_object(j, ctx);
  detail::reject_unknown(j, ctx, {"eps_yaw_deg", "eps_xy_m", "seed"});
  double yaw_deg = rad2deg(n.eps_yaw);
  detail::read(j, ctx, "eps_yaw_deg", yaw_deg);
  detail::read(j, ctx, "eps_xy_m", n.eps_xy);
  detail::read_seed(j, ctx, "seed", n.seed);
  if (!(yaw_deg >= 0.0)) throw ValidationError(detail::path(ctx, "eps_yaw_deg") + ": must be non-negative");
  if (!(n.eps_xy >= 0.0)) throw ValidationError(detail::path(ctx, "eps_xy_m") + ": must be non-negative");
  n.eps_yaw = deg2rad(yaw_deg);
  return n;
}

inline json to_json(const NoiseSpec& n) {
  return {{"eps_yaw_deg", rad2deg(n.eps_yaw)}, {"eps_xy_m", n.eps_xy}, {"seed", n.seed}};
}

/// Run configuration: {"stpe": {...}, "pf": {...}, "threshold_m": 30, "n_report": 30}.
inline eval::ExperimentConfig experiment_from_json(const json& j, eval::ExperimentConfig c = {}) {
  detail::require_object(j, "");
  detail::reject_unknown(j, "", {"stpe", "pf", "threshold_m", "n_report"});
  if (j.contains("stpe")) c.stpe = stpe_from_json(j.at("stpe"), c.stpe);
  if (j.contains("pf")) c.pf = pf_from_json(j.at("pf"), c.pf);
  detail::read(j, "", "threshold_m", c.threshold_m);
  detail::read(j, "", "n_report", c.n_report);
  if (!(c.threshold_m > 0.0)) throw ValidationError("threshold_m: must be positive");
  return c;
}

inline json to_json(const eval::ExperimentConfig& c) {
  return {{"stpe", to_json(c.stpe)}, {"pf", to_json(c.pf)}, {"threshold_m", c.threshold_m}, {"n_report", c.n_report}};
}

inline synth::WorldSpec world_from_json(const json& j, synth::WorldSpec w = {}) {
  detail::require_object(j, "");
  detail::reject_unknown(j, "",
                         {"extent_m", "road_grid_pitch_m", "road_width_m", "sidewalk_width_m", "cell_size_m", "submap_side_m",
                          "submap_interval_m", "patches_per_side", "roadside_depth_m", "motif_variation", "ambiguity_level",
                          "motif_count", "motif_tile_blocks", "descriptor_dim", "descriptor_noise_sigma",
                          "toxic_query_rate", "toxic_noise_mult", "query_spacing_m", "magnetometer_noise_deg",
                          "trajectory_length_m", "seed"});
  if (auto it = j.find("extent_m"); it != j.end()) {
    if (it->is_number()) {
      w.extent_x_m = w.extent_y_m = it->get<double>();
    } else if (it->is_array() && it->size() == 2 && (*it)[0].is_number() && (*it)[1].is_number()) {
      w.extent_x_m = (*it)[0].get<double>();
      w.extent_y_m = (*it)[1].get<double>();
    } else {
      throw ValidationError("extent_m: expected a number or a [x, y] pair of numbers");
    }
  }
  detail::read(j, "", "road_grid_pitch_m", w.road_grid_pitch_m);
  detail::read(j, "", "road_width_m", w.road_width_m);
  detail::read(j, "", "sidewalk_width_m", w.sidewalk_width_m);
  detail::read(j, "", "cell_size_m", w.cell_size_m);
  detail::read(j, "", "submap_side_m", w.submap_side_m);
  detail::read(j, "", "submap_interval_m", w.submap_interval_m);
  detail::read(j, "", "patches_per_side", w.patches_per_side);
  detail::read(j, "", "roadside_depth_m", w.roadside_depth_m);
  detail::read(j, "", "motif_variation", w.motif_variation);
  detail::read(j, "", "ambiguity_level", w.ambiguity_level);
  detail::read(j, "", "motif_count", w.motif_count);
  detail::read(j, "", "motif_tile_blocks", w.motif_tile_blocks);
  detail::read(j, "", "descriptor_dim", w.descriptor_dim);
  detail::read(j, "", "descriptor_noise_sigma", w.descriptor_noise_sigma);
  detail::read(j, "", "toxic_query_rate", w.toxic_query_rate);
  detail::read(j, "", "toxic_noise_mult", w.toxic_noise_mult);
  detail::read(j, "", "query_spacing_m", w.query_spacing_m);
  detail::read(j, "", "magnetometer_noise_deg", w.magnetometer_noise_deg);
  detail::read(j, "", "trajectory_length_m", w.trajectory_length_m);
  detail::read_seed(j, "", "seed", w.seed);
  w.validate();
  return w;
}

inline json to_json(const synth::WorldSpec& w) {
  return {{"extent_m", {w.extent_x_m, w.extent_y_m}},
          {"road_grid_pitch_m", w.road_grid_pitch_m},
          {"road_width_m", w.road_width_m},
          {"sidewalk_width_m", w.sidewalk_width_m},
          {"cell_size_m", w.cell_size_m},
          {"submap_side_m", w.submap_side_m},
          {"submap_interval_m", w.submap_interval_m},
          {"patches_per_side", w.patches_per_side},
          {"roadside_depth_m", w.roadside_depth_m},
          {"motif_variation", w.motif_variation},
          {"ambiguity_level", w.ambiguity_level},
          {"motif_count", w.motif_count},
          {"motif_tile_blocks", w.motif_tile_blocks},
          {"descriptor_dim", w.descriptor_dim},
          {"descriptor_noise_sigma", w.descriptor_noise_sigma},
          {"toxic_query_rate", w.toxic_query_rate},
          {"toxic_noise_mult", w.toxic_noise_mult},
          {"query_spacing_m", w.query_spacing_m},
          {"magnetometer_noise_deg", w.magnetometer_noise_deg},
          {"trajectory_length_m", w.trajectory_length_m},
          {"seed", w.seed}};
}

/// Sweep file. Either a single axis
///   {"axis": "lambda", "values": [...]}
/// or a grid
///   {"axes": [{"axis": "eps_yaw", "values": [...]}, {"axis": "eps_xy", "values": [...]}]}
/// plus optional "experiment", "method", "repeats", "config" (run config),
/// and "noise" (base noise).
inline eval::SweepSpec sweep_from_json(const json& j) {
  detail::require_object(j, "");
  detail::reject_unknown(j, "", {"experiment", "method", "axis", "values", "axes", "repeats", "config", "noise"});
  eval::SweepSpec s;
  detail::read(j, "", "experiment", s.experiment);
  if (j.contains("method")) {
    std::string m;
    detail::read(j, "", "method", m);
    s.method = eval::method_from_string(m);
  }
  detail::read(j, "", "repeats", s.repeats);
  auto read_axis = [](const json& a, const std::string& ctx) {
    detail::require_object(a, ctx);
    detail::reject_unknown(a, ctx, {"axis", "values"});
    if (!a.contains("axis")) throw ValidationError(detail::path(ctx, "axis") + ": missing");
    std::string name;
    detail::read(a, ctx, "axis", name);
    eval::AxisValues av;
    detail::checked(ctx, [&] { av.axis = eval::axis_from_string(name); });
    const auto it = a.find("values");
    if (it == a.end() || !it->is_array()) throw ValidationError(detail::path(ctx, "values") + ": expected an array");
    for (const auto& v : *it) {
      if (!v.is_number()) throw ValidationError(detail::path(ctx, "values") + ": expected numbers");
      av.values.push_back(v.get<double>());
    }
    if (av.values.empty()) throw ValidationError(detail::path(ctx, "values") + ": must not be empty");
    return av;
  };
  if (j.contains("axes")) {
    if (j.contains("axis") || j.contains("values")) throw ValidationError("axes: give either axes or axis/values, not both");
    if (!j.at("axes").is_array()) throw ValidationError("axes: expected an array");
    for (std::size_t i = 0; i < j.at("axes").size(); ++i) s.axes.push_back(read_axis(j.at("axes")[i], "axes[" + std::to_string(i) + "]"));
  } else {
    json single = json::object();
    if (j.contains("axis")) single["axis"] = j.at("axis");
    if (j.contains("values")) single["values"] = j.at("values");
    s.axes.push_back(read_axis(single, ""));
  }
  if (j.contains("config")) s.base = experiment_from_json(j.at("config"));
  if (j.contains("noise")) s.base_noise = noise_from_json(j.at("noise"));
  s.validate();
  return s;
}

inline json parse_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(what + ": malformed JSON (" + e.what() + ")");
  }
}

inline json load_json(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), file);
}

}  // namespace stpe::config
