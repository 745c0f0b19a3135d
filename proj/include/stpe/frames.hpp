#pragma once

// Query frames and the "queryseq v1" JSON-Lines format:
//   {"index":i,"descriptor":[..],"rel":{"dx":..,"dy":..,"dtheta":..},
//    "heading":{"value":..,"valid":..},"gt":{"x":..,"y":..}}
// "gt" is optional and only read by the evaluator.

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stpe/descriptor_index.hpp"
#include "stpe/errors.hpp"
#include "stpe/motion.hpp"

namespace stpe {

struct QueryFrame {
  std::int64_t index = 0;
  std::vector<float> descriptor;
  RelativeMotion rel;  // from the previous frame; ignored on the first frame
  HeadingSample heading;
  double path_len_from_prev = 0.0;
  std::optional<Vec2> gt;
};

// Dead-reckoned world positions of every frame, anchored at the origin with the
// first frame's heading sample.
inline std::vector<Pose2> dead_reckon(std::span<const QueryFrame> frames,
                                      double interval_m = DeadReckoner::kDefaultIntervalM) {
  DeadReckoner dr(interval_m);
  std::vector<Pose2> poses;
  poses.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i == 0) {
      poses.push_back(dr.start({}, frames[0].heading));
    } else {
      poses.push_back(dr.step(frames[i].rel, frames[i].heading, frames[i].path_len_from_prev));
    }
  }
  return poses;
}

// World-frame displacement from frame j's position to frame t's position.
inline Vec2 world_displacement(std::span<const QueryFrame> frames, std::size_t j, std::size_t t,
                               double interval_m = DeadReckoner::kDefaultIntervalM) {
  if (j > t || t >= frames.size()) throw ValidationError("frame index out of range");
  const auto poses = dead_reckon(frames.first(t + 1), interval_m);
  return {poses[t].x - poses[j].x, poses[t].y - poses[j].y};
}

// Replaces each frame's motion with a noisy copy and refreshes path lengths.
inline std::vector<QueryFrame> with_motion_noise(std::span<const QueryFrame> frames, const NoiseSpec& spec) {
  std::vector<RelativeMotion> rel;
  rel.reserve(frames.size());
  for (const auto& f : frames) rel.push_back(f.rel);
  const auto noisy = inject_noise(rel, spec);
  std::vector<QueryFrame> out(frames.begin(), frames.end());
  if (spec.is_zero()) return out;
  for (std::size_t i = 1; i < out.size(); ++i) {
    out[i].rel = noisy[i];
    out[i].path_len_from_prev = noisy[i].path_length();
  }
  return out;
}

namespace queryseq {

inline nlohmann::json to_json(const QueryFrame& f) {
  nlohmann::json j{{"index", f.index},
                   {"descriptor", f.descriptor},
                   {"rel", {{"dx", f.rel.dx}, {"dy", f.rel.dy}, {"dtheta", f.rel.dtheta}}},
                   {"heading", {{"value", f.heading.heading}, {"valid", f.heading.valid}}}};
  if (f.gt) j["gt"] = {{"x", f.gt->x}, {"y", f.gt->y}};
  return j;
}

inline QueryFrame from_json(const nlohmann::json& j) {
  QueryFrame f;
  f.index = j.at("index").get<std::int64_t>();
  f.descriptor = j.at("descriptor").get<std::vector<float>>();
  const auto& rel = j.at("rel");
  f.rel = {rel.at("dx").get<double>(), rel.at("dy").get<double>(), rel.at("dtheta").get<double>()};
  const auto& h = j.at("heading");
  f.heading = {h.at("value").get<double>(), h.at("valid").get<bool>()};
  f.path_len_from_prev = f.rel.path_length();
  if (j.contains("gt")) f.gt = Vec2{j["gt"].at("x").get<double>(), j["gt"].at("y").get<double>()};
  return f;
}

inline std::string to_jsonl(std::span<const QueryFrame> frames) {
  std::string out;
  for (const auto& f : frames) {
    out += to_json(f).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<QueryFrame> from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<QueryFrame> frames;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      frames.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("queryseq line " + std::to_string(line_no) + ": " + e.what());
    }
    if (frames.size() > 1 && frames.back().index <= frames[frames.size() - 2].index) {
      throw ValidationError("queryseq line " + std::to_string(line_no) + ": frame indices must increase");
    }
    if (frames.back().descriptor.size() != frames.front().descriptor.size()) {
      throw DimensionMismatch("queryseq line " + std::to_string(line_no) + ": descriptor dimension differs");
    }
  }
  return frames;
}

inline std::vector<QueryFrame> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

inline void save(const std::string& path, std::span<const QueryFrame> frames) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << to_jsonl(frames);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace queryseq
}  // namespace stpe
