#pragma once

// DBSCAN with minPts = 1 over planar candidate positions. With a single
// required neighbour there are no noise points and the clusters are exactly
// the connected components of the "within radius" graph.

#include <algorithm>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

#include "stpe/errors.hpp"

namespace stpe {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  std::int64_t payload_id = 0;
};

inline bool operator==(const Point2& a, const Point2& b) {
  return a.x == b.x && a.y == b.y && a.payload_id == b.payload_id;
}

struct ClusterSet {
  std::vector<std::vector<Point2>> clusters;

  std::size_t total_points() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.size();
    return n;
  }
};

namespace detail {
inline bool point_less(const Point2& a, const Point2& b) {
  return std::tie(a.payload_id, a.x, a.y) < std::tie(b.payload_id, b.x, b.y);
}
}  // namespace detail

inline constexpr double kDefaultClusterRadiusM = 30.0;

// Points inside a cluster are ordered by (payload_id, x, y); clusters by their
// first point. The result does not depend on input order.
inline ClusterSet dbscan(std::span<const Point2> points, double radius_m = kDefaultClusterRadiusM) {
  if (!(radius_m > 0.0)) throw ValidationError("cluster radius must be positive");
  const std::size_t n = points.size();
  const double r2 = radius_m * radius_m;
  std::vector<int> label(n, -1);
  std::vector<std::size_t> frontier;
  ClusterSet out;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (label[seed] >= 0) continue;
    const int id = static_cast<int>(out.clusters.size());
    out.clusters.emplace_back();
    auto& cluster = out.clusters.back();
    label[seed] = id;
    frontier.assign(1, seed);
    while (!frontier.empty()) {
      const auto i = frontier.back();
      frontier.pop_back();
      cluster.push_back(points[i]);
      for (std::size_t j = 0; j < n; ++j) {
        if (label[j] >= 0) continue;
        const double dx = points[i].x - points[j].x, dy = points[i].y - points[j].y;
        if (dx * dx + dy * dy <= r2) {
          label[j] = id;
          frontier.push_back(j);
        }
      }
    }
  }
  for (auto& c : out.clusters) std::sort(c.begin(), c.end(), detail::point_less);
  std::sort(out.clusters.begin(), out.clusters.end(),
            [](const auto& a, const auto& b) { return detail::point_less(a.front(), b.front()); });
  return out;
}

}  // namespace stpe
