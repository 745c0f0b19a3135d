#pragma once

// Planar rigid motion: pose composition, periodic magnetometer heading
// correction, and odometry noise injection.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "stpe/errors.hpp"

namespace stpe {

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// World-frame pose. theta is measured counter-clockwise from the +x (east) axis.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

// Body-frame motion between consecutive frames.
struct RelativeMotion {
  double dx = 0.0;  // forward
  double dy = 0.0;  // left
  double dtheta = 0.0;

  double path_length() const { return std::hypot(dx, dy); }
};

// Absolute heading in the same convention as Pose2::theta.
struct HeadingSample {
  double heading = 0.0;
  bool valid = false;
};

struct NoiseSpec {
  double eps_yaw = 0.0;  // radians, half-width of the uniform yaw perturbation
  double eps_xy = 0.0;   // meters, total translational magnitude; per axis eps_xy / sqrt(2)
  std::uint64_t seed = 0;

  bool is_zero() const { return eps_yaw == 0.0 && eps_xy == 0.0; }
};

inline Pose2 compose(const Pose2& p, const RelativeMotion& m) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  return {p.x + c * m.dx - s * m.dy, p.y + s * m.dx + c * m.dy, wrap_angle(p.theta + m.dtheta)};
}

// Motion m such that compose(a, m) == b.
inline RelativeMotion between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  const double wx = b.x - a.x, wy = b.y - a.y;
  return {c * wx + s * wy, -s * wx + c * wy, wrap_angle(b.theta - a.theta)};
}

// Incremental dead reckoning with heading replacement: once the path travelled
// since the last correction reaches interval_m and a valid sample is present,
// theta is overwritten by the sample. The correction is applied after composing
// the step that crosses the boundary.
class DeadReckoner {
 public:
  static constexpr double kDefaultIntervalM = 20.0;

  explicit DeadReckoner(double interval_m = kDefaultIntervalM) : interval_m_(interval_m) {
    if (!(interval_m > 0.0)) throw ValidationError("heading correction interval must be positive");
  }

  // First pose of a trajectory. A valid sample fixes the initial heading.
  const Pose2& start(const Pose2& initial, const HeadingSample& sample) {
    pose_ = initial;
    if (sample.valid) pose_.theta = wrap_angle(sample.heading);
    since_correction_ = 0.0;
    started_ = true;
    return pose_;
  }

  const Pose2& step(const RelativeMotion& m, const HeadingSample& sample, double path_len) {
    if (!started_) return start({}, sample);
    pose_ = compose(pose_, m);
    since_correction_ += path_len;
    if (since_correction_ >= interval_m_ && sample.valid) {
      pose_.theta = wrap_angle(sample.heading);
      since_correction_ = 0.0;
    }
    return pose_;
  }

  const Pose2& step(const RelativeMotion& m, const HeadingSample& sample) { return step(m, sample, m.path_length()); }

  const Pose2& pose() const { return pose_; }
  bool started() const { return started_; }

 private:
  double interval_m_;
  Pose2 pose_;
  double since_correction_ = 0.0;
  bool started_ = false;
};

// Re-integrates a trajectory, replacing theta at correction points and
// carrying later relative motions forward from the corrected pose.
inline std::vector<Pose2> apply_heading_correction(std::span<const Pose2> trajectory,
                                                   std::span<const HeadingSample> samples,
                                                   double interval_m = DeadReckoner::kDefaultIntervalM) {
  if (trajectory.empty()) throw ValidationError("empty trajectory");
  if (samples.size() != trajectory.size()) throw ValidationError("heading samples not aligned with trajectory");
  DeadReckoner dr(interval_m);
  std::vector<Pose2> out;
  out.reserve(trajectory.size());
  // The first pose is the anchor and is kept as given.
  out.push_back(dr.start(trajectory[0], HeadingSample{}));
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    out.push_back(dr.step(between(trajectory[i - 1], trajectory[i]), samples[i]));
  }
  return out;
}

// Uniform in [-half, +half]; exactly zero when half == 0.
template <typename Rng>
double uniform_pm(Rng& rng, double half) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return half * (2.0 * u(rng) - 1.0);
}

// Perturbs each motion with independent uniform yaw and per-axis translation
// noise. Deterministic in spec.seed.
inline std::vector<RelativeMotion> inject_noise(std::span<const RelativeMotion> motions, const NoiseSpec& spec) {
  if (spec.eps_yaw < 0.0 || spec.eps_xy < 0.0) throw ValidationError("noise magnitudes must be non-negative");
  std::mt19937_64 rng(spec.seed);
  const double per_axis = spec.eps_xy / std::sqrt(2.0);
  std::vector<RelativeMotion> out;
  out.reserve(motions.size());
  for (const auto& m : motions) {
    const double n_yaw = uniform_pm(rng, spec.eps_yaw);
    const double n_x = uniform_pm(rng, per_axis);
    const double n_y = uniform_pm(rng, per_axis);
    if (spec.is_zero()) {
      out.push_back(m);
      continue;
    }
    out.push_back({m.dx + n_x, m.dy + n_y, wrap_angle(m.dtheta + n_yaw)});
  }
  return out;
}

}  // namespace stpe
