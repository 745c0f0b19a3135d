#pragma once

// Axis-aligned Gaussian mixture score over the plane. Components are
// unnormalized: a component evaluates to its amplitude at its mean.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <json.hpp>

#include "stpe/clustering.hpp"
#include "stpe/descriptor_index.hpp"
#include "stpe/errors.hpp"

namespace stpe {

inline constexpr double kDefaultSigmaFloorM = 5.0;

struct GaussianComponent {
  double amplitude = 1.0;
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = kDefaultSigmaFloorM;
  double sigma_y = kDefaultSigmaFloorM;
};

struct MixtureDensity {
  std::vector<GaussianComponent> components;

  double total_amplitude() const {
    double s = 0.0;
    for (const auto& c : components) s += c.amplitude;
    return s;
  }
  bool empty() const { return components.empty(); }
};

// One component per cluster: amplitude is the cluster's share of all points,
// mean is the centroid, sigmas are population standard deviations per axis
// clamped below at sigma_floor.
inline MixtureDensity fit_components(const ClusterSet& clusters, double sigma_floor = kDefaultSigmaFloorM) {
  if (clusters.clusters.empty()) throw ValidationError("cannot fit an empty cluster set");
  if (!(sigma_floor > 0.0)) throw ValidationError("sigma floor must be positive");
  const double total = static_cast<double>(clusters.total_points());
  MixtureDensity d;
  d.components.reserve(clusters.clusters.size());
  for (const auto& cluster : clusters.clusters) {
    if (cluster.empty()) throw ValidationError("cluster set contains an empty cluster");
    const double n = static_cast<double>(cluster.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& p : cluster) {
      sx += p.x;
      sy += p.y;
    }
    const double mx = sx / n, my = sy / n;
    double vx = 0.0, vy = 0.0;
    for (const auto& p : cluster) {
      vx += (p.x - mx) * (p.x - mx);
      vy += (p.y - my) * (p.y - my);
    }
    d.components.push_back({n / total, mx, my, std::max(std::sqrt(vx / n), sigma_floor),
                            std::max(std::sqrt(vy / n), sigma_floor)});
  }
  return d;
}

inline double eval_density(const MixtureDensity& d, double x, double y) {
  double s = 0.0;
  for (const auto& c : d.components) {
    const double ex = (x - c.mu_x) / c.sigma_x, ey = (y - c.mu_y) / c.sigma_y;
    s += c.amplitude * std::exp(-0.5 * (ex * ex + ey * ey));
  }
  return s;
}

inline MixtureDensity translate(const MixtureDensity& d, const Vec2& delta) {
  MixtureDensity out = d;
  for (auto& c : out.components) {
    c.mu_x += delta.x;
    c.mu_y += delta.y;
  }
  return out;
}

// Equal-weight average of L mixtures: concatenated components, amplitudes / L.
inline MixtureDensity mix(std::span<const MixtureDensity> densities) {
  if (densities.empty()) throw ValidationError("cannot mix an empty list of densities");
  const double w = 1.0 / static_cast<double>(densities.size());
  MixtureDensity out;
  for (const auto& d : densities) {
    for (auto c : d.components) {
      c.amplitude *= w;
      out.components.push_back(c);
    }
  }
  return out;
}

// Integral of exp(-(t - mu)^2 / (2 sigma^2)) over [center - r, center + r].
// Uses erfc on the same-sign branches so far tails keep their relative precision.
inline double axis_integral(double center, double r, double mu, double sigma) {
  const double k = sigma * std::numbers::sqrt2;
  const double a = (center - r - mu) / k;
  const double b = (center + r - mu) / k;
  double diff;
  if (a >= 0.0) {
    diff = std::erfc(a) - std::erfc(b);
  } else if (b <= 0.0) {
    diff = std::erfc(-b) - std::erfc(-a);
  } else {
    diff = std::erf(b) - std::erf(a);
  }
  return sigma * std::sqrt(std::numbers::pi / 2.0) * diff;
}

// Mean of the mixture over the square [u-r, u+r] x [v-r, v+r].
inline double rect_probability(const MixtureDensity& d, double u, double v, double r) {
  if (!(r > 0.0)) throw ValidationError("rectangle half-side must be positive");
  double s = 0.0;
  for (const auto& c : d.components) {
    s += c.amplitude * axis_integral(u, r, c.mu_x, c.sigma_x) * axis_integral(v, r, c.mu_y, c.sigma_y);
  }
  return s * (1.0 / (4.0 * r * r));
}

inline nlohmann::json to_json(const MixtureDensity& d) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : d.components) {
    comps.push_back({{"A", c.amplitude}, {"mux", c.mu_x}, {"muy", c.mu_y}, {"sx", c.sigma_x}, {"sy", c.sigma_y}});
  }
  return {{"components", comps}};
}

inline MixtureDensity mixture_from_json(const nlohmann::json& j) {
  MixtureDensity d;
  for (const auto& c : j.at("components")) {
    d.components.push_back({c.at("A").get<double>(), c.at("mux").get<double>(), c.at("muy").get<double>(),
                            c.at("sx").get<double>(), c.at("sy").get<double>()});
  }
  return d;
}

}  // namespace stpe
