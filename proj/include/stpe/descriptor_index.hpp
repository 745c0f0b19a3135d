#pragma once

// Submap database with exact top-C similarity retrieval.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stpe/errors.hpp"

namespace stpe {

using SubmapId = std::int64_t;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct SubmapRecord {
  SubmapId id = 0;
  double center_u = 0.0;  // east, meters
  double center_v = 0.0;  // north, meters
  std::vector<float> descriptor;
};

struct RetrievalHit {
  SubmapId submap_id = 0;
  double similarity = 0.0;
  Vec2 position;
};

// Dot product of two float vectors accumulated in double.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

// Returns a unit-length copy; throws on a zero or non-finite norm.
inline std::vector<float> normalized(std::span<const float> v) {
  double n2 = 0.0;
  for (float x : v) n2 += static_cast<double>(x) * static_cast<double>(x);
  const double n = std::sqrt(n2);
  if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("zero-norm descriptor cannot be normalized");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
  return out;
}

// Ordering used everywhere a hit list is sorted: similarity descending, id ascending.
inline bool hit_before(const RetrievalHit& a, const RetrievalHit& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.submap_id < b.submap_id;
}

/// Immutable submap database. Descriptors are L2-normalized at build time and
/// stored row-major; centers are bucketed on a square grid for radius queries.
/// Concurrent const access is safe.
class DescriptorIndex {
 public:
  static constexpr double kDefaultBucketM = 50.0;

  static DescriptorIndex build(std::span<const SubmapRecord> records, double bucket_m = kDefaultBucketM) {
    if (records.empty()) throw ValidationError("empty database");
    if (!(bucket_m > 0.0)) throw ValidationError("bucket size must be positive");
    DescriptorIndex idx;
    idx.dim_ = records.front().descriptor.size();
    if (idx.dim_ == 0) throw ValidationError("descriptor dimension must be positive");
    idx.bucket_m_ = bucket_m;
    idx.ids_.reserve(records.size());
    idx.positions_.reserve(records.size());
    idx.data_.reserve(records.size() * idx.dim_);
    for (const auto& r : records) {
      if (r.descriptor.size() != idx.dim_) {
        throw DimensionMismatch("descriptor dimension mismatch for submap " + std::to_string(r.id) + ": expected " +
                                std::to_string(idx.dim_) + ", got " + std::to_string(r.descriptor.size()));
      }
      if (!std::isfinite(r.center_u) || !std::isfinite(r.center_v)) {
        throw ValidationError("non-finite center for submap " + std::to_string(r.id));
      }
      const auto row = idx.ids_.size();
      if (!idx.row_of_.emplace(r.id, row).second) throw ValidationError("duplicate submap id " + std::to_string(r.id));
      const auto unit = normalized(r.descriptor);
      idx.data_.insert(idx.data_.end(), unit.begin(), unit.end());
      idx.ids_.push_back(r.id);
      idx.positions_.push_back({r.center_u, r.center_v});
      idx.buckets_[idx.bucket_key(r.center_u, r.center_v)].push_back(row);
    }
    return idx;
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dimension() const { return dim_; }

  SubmapId id(std::size_t row) const { return ids_[row]; }
  const Vec2& position(std::size_t row) const { return positions_[row]; }
  std::span<const float> descriptor(std::size_t row) const { return {data_.data() + row * dim_, dim_}; }

  // Row of a submap id, or size() when absent.
  std::size_t row_of(SubmapId id) const {
    auto it = row_of_.find(id);
    return it == row_of_.end() ? size() : it->second;
  }

  // Normalizes a query descriptor after checking its dimension.
  std::vector<float> prepare_query(std::span<const float> q) const {
    if (q.size() != dim_) {
      throw DimensionMismatch("query dimension " + std::to_string(q.size()) + " does not match index dimension " +
                              std::to_string(dim_));
    }
    return normalized(q);
  }

  // Similarity of an already-normalized query to one row.
  double similarity(std::span<const float> unit_query, std::size_t row) const { return dot(unit_query, descriptor(row)); }

  // Exact brute-force scan; returns min(c, size()) hits in hit_before order.
  std::vector<RetrievalHit> query_top_c(std::span<const float> q, std::size_t c) const {
    if (c == 0) throw ValidationError("c must be at least 1");
    const auto unit = prepare_query(q);
    std::vector<double> sims(size());
    for (std::size_t row = 0; row < size(); ++row) sims[row] = similarity(unit, row);
    std::vector<std::size_t> order(size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto take = std::min(c, size());
    auto before = [&](std::size_t a, std::size_t b) {
      if (sims[a] != sims[b]) return sims[a] > sims[b];
      return ids_[a] < ids_[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), before);
    std::vector<RetrievalHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
      const auto row = order[i];
      hits.push_back({ids_[row], sims[row], positions_[row]});
    }
    return hits;
  }

  // Calls fn(row) for every submap whose center lies within radius of (x, y).
  template <typename Fn>
  void for_each_within(double x, double y, double radius, Fn&& fn) const {
    const auto lo_x = cell(x - radius), hi_x = cell(x + radius);
    const auto lo_y = cell(y - radius), hi_y = cell(y + radius);
    const double r2 = radius * radius;
    for (auto cx = lo_x; cx <= hi_x; ++cx) {
      for (auto cy = lo_y; cy <= hi_y; ++cy) {
        auto it = buckets_.find(pack(cx, cy));
        if (it == buckets_.end()) continue;
        for (std::size_t row : it->second) {
          const double dx = positions_[row].x - x, dy = positions_[row].y - y;
          if (dx * dx + dy * dy <= r2) fn(row);
        }
      }
    }
  }

 private:
  std::int64_t cell(double c) const { return static_cast<std::int64_t>(std::floor(c / bucket_m_)); }
  static std::uint64_t pack(std::int64_t cx, std::int64_t cy) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(cx)) << 32) |
           static_cast<std::uint64_t>(static_cast<std::uint32_t>(cy));
  }
  std::uint64_t bucket_key(double x, double y) const { return pack(cell(x), cell(y)); }

  std::size_t dim_ = 0;
  double bucket_m_ = kDefaultBucketM;
  std::vector<SubmapId> ids_;
  std::vector<Vec2> positions_;
  std::vector<float> data_;
  std::unordered_map<SubmapId, std::size_t> row_of_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

/// Symmetric InfoNCE over a batch of paired descriptors, averaged over the batch.
/// Row i of the similarity matrix S = Q·Pᵀ/tau contributes the query-to-reference
/// term -log softmax(S_i)_i and the reference-to-query term -log softmax(Sᵀ_i)_i.
/// Descriptors are expected to be unit length already.
inline double symmetric_infonce(std::span<const std::vector<float>> batch_q, std::span<const std::vector<float>> batch_p,
                                double tau) {
  if (batch_q.size() != batch_p.size()) throw ValidationError("mismatched batch sizes");
  if (batch_q.empty()) throw ValidationError("empty batch");
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  const std::size_t n = batch_q.size();
  std::vector<double> s(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch_q[i].size() != batch_q[0].size() || batch_p[i].size() != batch_q[0].size()) {
      throw DimensionMismatch("descriptor dimensions differ within batch");
    }
    for (std::size_t j = 0; j < n; ++j) s[i * n + j] = dot(batch_q[i], batch_p[j]) / tau;
  }
  // -log(exp(x_k) / sum_j exp(x_j)) evaluated stably.
  auto neg_log_softmax = [n](auto&& at, std::size_t k) {
    double mx = at(0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, at(j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(at(j) - mx);
    return std::log(sum) - (at(k) - mx);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += neg_log_softmax([&](std::size_t j) { return s[i * n + j]; }, i);
    total += neg_log_softmax([&](std::size_t j) { return s[j * n + i]; }, i);
  }
  return total / static_cast<double>(n);
}

}  // namespace stpe
