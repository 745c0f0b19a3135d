#pragma once

/**
 * @file synthworld.hpp
 * @brief Seeded synthetic grid-road cities, submap databases and query runs.
 *
 * The world is a raster of four semantic classes. Roads form a regular grid
 * with sidewalks on both sides. Each block has a kerb strip of frontages along
 * each of its four sides and an interior layout behind them. Blocks are grouped
 * into square tiles; a fraction `ambiguity_level` of tiles copies one of
 * `motif_count` shared tiles (with small per-instance variation), so distant
 * places look alike.
 *
 * A submap descriptor is a fixed random projection of a class-histogram
 * pyramid over a north-aligned square window, plus Gaussian noise whose
 * expected norm is `descriptor_noise_sigma`. A fraction `toxic_query_rate` of
 * query frames carries `toxic_noise_mult` times that noise, standing in for
 * single observations that barely resemble their map tile.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stpe/descriptor_index.hpp"
#include "stpe/errors.hpp"
#include "stpe/frames.hpp"
#include "stpe/motion.hpp"

namespace stpe::synth {

enum class Semantic : std::uint8_t { road = 0, sidewalk = 1, vegetation = 2, building = 3 };
inline constexpr std::size_t kClassCount = 4;

struct WorldSpec {
  double extent_x_m = 2000.0;
  double extent_y_m = 2000.0;
  double road_grid_pitch_m = 100.0;
  double road_width_m = 10.0;
  double sidewalk_width_m = 3.0;
  double cell_size_m = 2.0;
  double submap_side_m = 60.0;
  double submap_interval_m = 20.0;
  int patches_per_side = 4;
  double roadside_depth_m = 25.0;  // depth past the kerb covered by a block's kerb strips
  double motif_variation = 0.1;    // per-instance drop rate of motif features; shift up to 20 m times this
  double ambiguity_level = 0.0;    // fraction of tiles that copy a motif
  int motif_count = 4;
  int motif_tile_blocks = 1;       // tile side in blocks
  std::size_t descriptor_dim = 128;
  double descriptor_noise_sigma = 0.05;
  double toxic_query_rate = 0.05;
  double toxic_noise_mult = 20.0;
  double query_spacing_m = 5.0;
  double magnetometer_noise_deg = 10.0;
  double trajectory_length_m = 2500.0;
  std::uint64_t seed = 1;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + ": must be positive");
    };
    positive(extent_x_m, "extent_m");
    positive(extent_y_m, "extent_m");
    positive(road_grid_pitch_m, "road_grid_pitch_m");
    positive(road_width_m, "road_width_m");
    positive(cell_size_m, "cell_size_m");
    positive(submap_side_m, "submap_side_m");
    positive(submap_interval_m, "submap_interval_m");
    positive(query_spacing_m, "query_spacing_m");
    if (sidewalk_width_m < 0.0) throw ValidationError("sidewalk_width_m: must be non-negative");
    if (submap_interval_m > submap_side_m) throw ValidationError("submap_interval_m: must not exceed submap_side_m");
    if (motif_count < 1) throw ValidationError("motif_count: must be at least 1");
    if (motif_tile_blocks < 1) throw ValidationError("motif_tile_blocks: must be at least 1");
    if (patches_per_side < 1) throw ValidationError("patches_per_side: must be at least 1");
    if (!(roadside_depth_m >= 0.0)) throw ValidationError("roadside_depth_m: must be non-negative");
    if (!(motif_variation >= 0.0 && motif_variation <= 1.0)) throw ValidationError("motif_variation: must lie in [0, 1]");
    if (!(ambiguity_level >= 0.0 && ambiguity_level <= 1.0)) throw ValidationError("ambiguity_level: must lie in [0, 1]");
    if (descriptor_dim < 1) throw ValidationError("descriptor_dim: must be at least 1");
    if (!(descriptor_noise_sigma >= 0.0)) throw ValidationError("descriptor_noise_sigma: must be non-negative");
    if (!(toxic_query_rate >= 0.0 && toxic_query_rate <= 1.0)) throw ValidationError("toxic_query_rate: must lie in [0, 1]");
    if (!(toxic_noise_mult >= 1.0)) throw ValidationError("toxic_noise_mult: must be at least 1");
    if (!(magnetometer_noise_deg >= 0.0)) throw ValidationError("magnetometer_noise_deg: must be non-negative");
    if (trajectory_length_m < 0.0) throw ValidationError("trajectory_length_m: must be non-negative");
    if (extent_x_m < road_grid_pitch_m || extent_y_m < road_grid_pitch_m) {
      throw ValidationError("extent_m: extent too small for one block at this road_grid_pitch_m");
    }
  }
};

// splitmix64 finalizer; derives independent stream seeds from (seed, tags).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return step(step(step(a) ^ b) ^ c);
}

namespace stream {
inline constexpr std::uint64_t kTiles = 1, kMotif = 2, kLayout = 3, kProjection = 4, kDbNoise = 5, kQueryNoise = 6,
                               kWalk = 7, kMagnetometer = 8, kInteriorVariant = 9, kStripVariant = 10,
                               kToxic = 11;
}

struct Rect {
  double x0, y0, x1, y1;
  Semantic cls;
};

// Block content in block-local coordinates (origin at the block's lower-left interior corner).
struct BlockLayout {
  Semantic background = Semantic::vegetation;
  std::vector<Rect> rects;  // later entries paint over earlier ones

  Semantic at(double lx, double ly) const {
    for (auto it = rects.rbegin(); it != rects.rend(); ++it) {
      if (lx >= it->x0 && lx < it->x1 && ly >= it->y0 && ly < it->y1) return it->cls;
    }
    return background;
  }

  static BlockLayout random(std::uint64_t seed, double span_m) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    BlockLayout b;
    b.background = u(rng) < 0.5 ? Semantic::vegetation : Semantic::sidewalk;
    const int patches = static_cast<int>(range(0.0, 4.0));
    for (int i = 0; i < patches; ++i) {
      const double x = range(0.0, span_m), y = range(0.0, span_m);
      b.rects.push_back({x, y, x + range(5.0, 25.0), y + range(5.0, 25.0), Semantic::vegetation});
    }
    const int buildings = 1 + static_cast<int>(range(0.0, 4.0));
    for (int i = 0; i < buildings; ++i) {
      const double x = range(0.0, span_m * 0.75), y = range(0.0, span_m * 0.75);
      b.rects.push_back({x, y, x + range(10.0, 40.0), y + range(10.0, 40.0), Semantic::building});
    }
    return b;
  }

  // Instance of a shared layout: each rectangle dropped with probability
  // `variation`, the rest shifted together by up to 20 * variation along x.
  BlockLayout variant(std::uint64_t seed, double variation) const {
    if (variation == 0.0) return *this;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double shift = 20.0 * variation * (2.0 * u(rng) - 1.0);
    BlockLayout b;
    b.background = background;
    for (const auto& r : rects) {
      if (u(rng) < variation) continue;
      b.rects.push_back({r.x0 + shift, r.y0, r.x1 + shift, r.y1, r.cls});
    }
    return b;
  }

  // Layout of a length x depth strip along a kerb: consecutive frontage runs,
  // each a front layer and a second layer of random classes and depths, in
  // front of a vegetation or building backdrop. Depth carries most of the
  // detail since it does not change as a window slides along the road.
  static BlockLayout random_strip(std::uint64_t seed, double length_m, double depth_m) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    auto pick = [&] { return static_cast<Semantic>(1 + static_cast<int>(u(rng) * 3.0) % 3); };
    BlockLayout b;
    b.background = u(rng) < 0.5 ? Semantic::vegetation : Semantic::building;
    for (double x = 0.0; x < length_m;) {
      const double len = range(15.0, 30.0);
      const double front = range(0.1, 0.6) * depth_m;
      const double back = range(front, depth_m);
      const Semantic c1 = pick();
      Semantic c2 = pick();
      if (c2 == c1) c2 = static_cast<Semantic>(1 + static_cast<int>(c1) % 3);
      b.rects.push_back({x, 0.0, x + len, front, c1});
      b.rects.push_back({x, front, x + len, back, c2});
      x += len;
    }
    return b;
  }
};

class SemanticGrid {
 public:
  double cell_size_m = 2.0;
  std::size_t nx = 0, ny = 0;
  std::vector<std::uint8_t> cells;   // row-major, y-major rows
  std::vector<double> road_x;        // x of north-south road centerlines
  std::vector<double> road_y;        // y of east-west road centerlines
  std::size_t blocks_x = 0, blocks_y = 0;
  // Motif id per block (row-major, blocks_x per row), -1 for unique content.
  // Blocks are grouped into square tiles of motif_tile_blocks; every block of
  // a motif tile copies the block at the same place in the motif.
  std::vector<int> block_motif;
  std::size_t motif_tile_blocks = 1;

  int motif_of(std::size_t bx, std::size_t by) const { return block_motif[by * blocks_x + bx]; }
  // Mean window feature over the database lattice; features are centered on it
  // so the road layout every window shares does not dominate similarity.
  std::vector<double> feature_mean;

  Semantic at(std::size_t ix, std::size_t iy) const { return static_cast<Semantic>(cells[iy * nx + ix]); }
  double extent_x() const { return static_cast<double>(nx) * cell_size_m; }
  double extent_y() const { return static_cast<double>(ny) * cell_size_m; }

  // Class of the cell containing (x, y); nullopt outside the raster.
  std::optional<Semantic> sample(double x, double y) const {
    if (x < 0.0 || y < 0.0) return std::nullopt;
    const auto ix = static_cast<std::size_t>(x / cell_size_m), iy = static_cast<std::size_t>(y / cell_size_m);
    if (ix >= nx || iy >= ny) return std::nullopt;
    return at(ix, iy);
  }
};

namespace detail {

// Distance to the nearest line of a regular family offset + k * pitch, k in [0, count).
inline double nearest_line_distance(double c, std::span<const double> lines) {
  double best = std::numeric_limits<double>::infinity();
  auto it = std::lower_bound(lines.begin(), lines.end(), c);
  if (it != lines.end()) best = std::min(best, std::abs(*it - c));
  if (it != lines.begin()) best = std::min(best, std::abs(*std::prev(it) - c));
  return best;
}

// Index of the block interval containing c, with block boundaries at the lines.
inline std::size_t block_of(double c, std::span<const double> lines) {
  return static_cast<std::size_t>(std::upper_bound(lines.begin(), lines.end(), c) - lines.begin());
}

}  // namespace detail

inline SemanticGrid rasterize_world(const WorldSpec& spec) {
  spec.validate();
  SemanticGrid g;
  g.cell_size_m = spec.cell_size_m;
  g.nx = static_cast<std::size_t>(std::ceil(spec.extent_x_m / spec.cell_size_m));
  g.ny = static_cast<std::size_t>(std::ceil(spec.extent_y_m / spec.cell_size_m));
  const double pitch = spec.road_grid_pitch_m;
  const auto lines_x = static_cast<std::size_t>(std::floor(spec.extent_x_m / pitch));
  const auto lines_y = static_cast<std::size_t>(std::floor(spec.extent_y_m / pitch));
  for (std::size_t k = 0; k < lines_x; ++k) g.road_x.push_back(pitch / 2.0 + static_cast<double>(k) * pitch);
  for (std::size_t k = 0; k < lines_y; ++k) g.road_y.push_back(pitch / 2.0 + static_cast<double>(k) * pitch);
  g.blocks_x = lines_x + 1;
  g.blocks_y = lines_y + 1;

  const auto tile = static_cast<std::size_t>(spec.motif_tile_blocks);
  g.motif_tile_blocks = tile;
  const std::size_t tiles_x = (g.blocks_x + tile - 1) / tile, tiles_y = (g.blocks_y + tile - 1) / tile;
  std::mt19937_64 tile_rng(mix_seed(spec.seed, stream::kTiles));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> tile_motif(tiles_x * tiles_y);
  for (auto& m : tile_motif) {
    const bool shared = u(tile_rng) < spec.ambiguity_level;
    const int which = std::min(static_cast<int>(u(tile_rng) * spec.motif_count), spec.motif_count - 1);
    m = shared ? which : -1;
  }
  g.block_motif.resize(g.blocks_x * g.blocks_y);
  for (std::size_t by = 0; by < g.blocks_y; ++by)
    for (std::size_t bx = 0; bx < g.blocks_x; ++bx) g.block_motif[by * g.blocks_x + bx] = tile_motif[(by / tile) * tiles_x + bx / tile];

  const double half_road = spec.road_width_m / 2.0;
  const double kerb = half_road + spec.sidewalk_width_m;
  const double span = pitch - 2.0 * kerb;
  const double depth = spec.roadside_depth_m;
  // Interior and kerb strips (south, north, west, east) of every block. A motif
  // block draws them from a seed shared by the same place in every copy of the
  // motif tile, then perturbs its instance.
  struct BlockContent {
    BlockLayout interior;
    std::array<BlockLayout, 4> strips;
  };
  std::vector<BlockContent> blocks(g.blocks_x * g.blocks_y);
  for (std::size_t by = 0; by < g.blocks_y; ++by) {
    for (std::size_t bx = 0; bx < g.blocks_x; ++bx) {
      const auto b = by * g.blocks_x + bx;
      const int m = g.block_motif[b];
      const std::uint64_t key =
          m >= 0 ? mix_seed(stream::kMotif, static_cast<std::uint64_t>(m), (by % tile) * tile + bx % tile) : mix_seed(stream::kLayout, b);
      auto& c = blocks[b];
      c.interior = BlockLayout::random(mix_seed(spec.seed, key), span);
      for (std::uint64_t side = 0; side < 4; ++side) {
        c.strips[side] = BlockLayout::random_strip(mix_seed(spec.seed, key, 1 + side), span, depth);
      }
      if (m >= 0) {
        c.interior = c.interior.variant(mix_seed(spec.seed, stream::kInteriorVariant, b), spec.motif_variation);
        for (std::uint64_t side = 0; side < 4; ++side) {
          c.strips[side] = c.strips[side].variant(mix_seed(spec.seed, stream::kStripVariant, 4 * b + side), spec.motif_variation);
        }
      }
    }
  }
  // Lower-left interior corner of each block column/row.
  auto interior_origin = [&](std::size_t block, std::span<const double> lines) {
    return block == 0 ? lines.front() - pitch + kerb : lines[block - 1] + kerb;
  };
  // Content of a block interior point; south and north strips take the corners.
  auto block_content = [&](std::size_t bx, std::size_t by, double lx, double ly) {
    const auto& c = blocks[by * g.blocks_x + bx];
    if (ly < depth) return c.strips[0].at(lx, ly);
    if (span - ly < depth) return c.strips[1].at(lx, span - ly);
    if (lx < depth) return c.strips[2].at(ly, lx);
    if (span - lx < depth) return c.strips[3].at(ly, span - lx);
    return c.interior.at(lx, ly);
  };

  g.cells.resize(g.nx * g.ny);
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    const double y = (static_cast<double>(iy) + 0.5) * g.cell_size_m;
    const double dy = detail::nearest_line_distance(y, g.road_y);
    const auto by = detail::block_of(y, g.road_y);
    const double oy = interior_origin(by, g.road_y);
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const double x = (static_cast<double>(ix) + 0.5) * g.cell_size_m;
      const double dx = detail::nearest_line_distance(x, g.road_x);
      Semantic cls;
      if (std::min(dx, dy) <= half_road) {
        cls = Semantic::road;
      } else if (std::min(dx, dy) <= kerb) {
        cls = Semantic::sidewalk;
      } else {
        const auto bx = detail::block_of(x, g.road_x);
        cls = block_content(bx, by, x - interior_origin(bx, g.road_x), y - oy);
      }
      g.cells[iy * g.nx + ix] = static_cast<std::uint8_t>(cls);
    }
  }
  return g;
}

/// Class histograms of the square window centered at (cx, cy) over a pyramid
/// of d x d patch grids, one level per divisor d of patches_per_side. Cells
/// are shared between the two nearest finest-level patch centers per axis with
/// linear weights, so the feature varies continuously as the window slides.
/// Cells outside the raster are ignored; a patch that receives no weight
/// stays zero. The result is centered on the grid's feature_mean if present.
inline std::vector<double> window_feature(const SemanticGrid& g, const WorldSpec& spec, double cx, double cy) {
  const int p = spec.patches_per_side;
  const double side = spec.submap_side_m;
  const double patch = side / p;
  const double x0 = cx - side / 2.0, y0 = cy - side / 2.0;
  const double cs = g.cell_size_m;
  const auto np = static_cast<std::size_t>(p);
  std::vector<double> counts(np * np * kClassCount, 0.0);
  // Cells whose centers fall within half a patch of the window edge or inside it.
  auto cell_range = [cs](double lo, double hi, std::size_t n) {
    const long a = std::max(0L, static_cast<long>(std::ceil(lo / cs - 0.5)));
    const long b = std::min(static_cast<long>(n), static_cast<long>(std::ceil(hi / cs - 0.5)));
    return std::pair{a, b};
  };
  // Lower patch index and weight of the upper one along an axis.
  auto split = [&](double c, double origin) {
    const double f = (c - origin) / patch - 0.5;
    const double lo = std::floor(f);
    return std::pair{static_cast<long>(lo), f - lo};
  };
  const auto [iy_lo, iy_hi] = cell_range(y0 - patch / 2.0, y0 + side + patch / 2.0, g.ny);
  const auto [ix_lo, ix_hi] = cell_range(x0 - patch / 2.0, x0 + side + patch / 2.0, g.nx);
  for (long iy = iy_lo; iy < iy_hi; ++iy) {
    const auto [by, wy1] = split((static_cast<double>(iy) + 0.5) * cs, y0);
    const auto* row = g.cells.data() + static_cast<std::size_t>(iy) * g.nx;
    for (long ix = ix_lo; ix < ix_hi; ++ix) {
      const auto [bx, wx1] = split((static_cast<double>(ix) + 0.5) * cs, x0);
      const std::size_t cls = row[ix];
      for (int dy = 0; dy < 2; ++dy) {
        const long b = by + dy;
        if (b < 0 || b >= p) continue;
        const double wy = dy ? wy1 : 1.0 - wy1;
        for (int dx = 0; dx < 2; ++dx) {
          const long a = bx + dx;
          if (a < 0 || a >= p) continue;
          const double w = wy * (dx ? wx1 : 1.0 - wx1);
          counts[(static_cast<std::size_t>(b) * np + static_cast<std::size_t>(a)) * kClassCount + cls] += w;
        }
      }
    }
  }
  // Pyramid over every divisor of p; level weight 1/d keeps each level's norm comparable.
  std::vector<double> feature;
  for (int d = 1; d <= p; ++d) {
    if (p % d != 0) continue;
    const int m = p / d;
    for (int by = 0; by < d; ++by) {
      for (int bx = 0; bx < d; ++bx) {
        double c[kClassCount] = {};
        for (int fy = by * m; fy < (by + 1) * m; ++fy)
          for (int fx = bx * m; fx < (bx + 1) * m; ++fx)
            for (std::size_t k = 0; k < kClassCount; ++k) c[k] += counts[(static_cast<std::size_t>(fy) * np + static_cast<std::size_t>(fx)) * kClassCount + k];
        const double total = c[0] + c[1] + c[2] + c[3];
        for (std::size_t k = 0; k < kClassCount; ++k) feature.push_back(total == 0.0 ? 0.0 : (c[k] / total - 1.0 / kClassCount) / d);
      }
    }
  }
  if (g.feature_mean.size() == feature.size()) {
    for (std::size_t i = 0; i < feature.size(); ++i) feature[i] -= g.feature_mean[i];
  }
  return feature;
}

/// Length of window_feature's output.
inline std::size_t feature_size(const WorldSpec& spec) {
  std::size_t n = 0;
  for (int d = 1; d <= spec.patches_per_side; ++d) {
    if (spec.patches_per_side % d == 0) n += static_cast<std::size_t>(d * d) * kClassCount;
  }
  return n;
}

/// Fixed Gaussian random projection from window features to descriptors.
class DescriptorModel {
 public:
  explicit DescriptorModel(const WorldSpec& spec)
      : dim_(spec.descriptor_dim),
        in_(feature_size(spec)),
        noise_sigma_(spec.descriptor_noise_sigma) {
    std::mt19937_64 rng(mix_seed(spec.seed, stream::kProjection));
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(in_)));
    weights_.resize(dim_ * in_);
    for (auto& w : weights_) w = n(rng);
  }

  // Noise-free unit descriptor (zero vector if the feature is all zero).
  std::vector<double> embed(std::span<const double> feature) const {
    std::vector<double> out(dim_, 0.0);
    for (std::size_t d = 0; d < dim_; ++d) {
      double s = 0.0;
      const double* w = weights_.data() + d * in_;
      for (std::size_t i = 0; i < in_; ++i) s += w[i] * feature[i];
      out[d] = s;
    }
    double n2 = 0.0;
    for (double v : out) n2 += v * v;
    if (n2 > 0.0) {
      const double inv = 1.0 / std::sqrt(n2);
      for (auto& v : out) v *= inv;
    }
    return out;
  }

  // Unit embedding plus isotropic noise with per-dimension std sigma / sqrt(D).
  // `scale` multiplies the noise level for this one descriptor.
  std::vector<float> describe(std::span<const double> feature, std::uint64_t noise_seed, double scale = 1.0) const {
    const auto unit = embed(feature);
    const double sigma = noise_sigma_ * scale;
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> n(0.0, sigma / std::sqrt(static_cast<double>(dim_)));
    std::vector<float> out(dim_);
    for (std::size_t d = 0; d < dim_; ++d) out[d] = static_cast<float>(unit[d] + (sigma > 0.0 ? n(rng) : 0.0));
    return out;
  }

 private:
  std::size_t dim_;
  std::size_t in_;
  double noise_sigma_;
  std::vector<double> weights_;
};

// True when any road cell lies in the central square of half-side `half` around (cx, cy).
inline bool has_road_near(const SemanticGrid& g, double cx, double cy, double half) {
  const double cs = g.cell_size_m;
  const long ix_lo = std::max(0L, static_cast<long>(std::ceil((cx - half) / cs - 0.5)));
  const long ix_hi = std::min(static_cast<long>(g.nx), static_cast<long>(std::ceil((cx + half) / cs - 0.5)));
  const long iy_lo = std::max(0L, static_cast<long>(std::ceil((cy - half) / cs - 0.5)));
  const long iy_hi = std::min(static_cast<long>(g.ny), static_cast<long>(std::ceil((cy + half) / cs - 0.5)));
  for (long iy = iy_lo; iy < iy_hi; ++iy) {
    for (long ix = ix_lo; ix < ix_hi; ++ix) {
      if (g.at(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy)) == Semantic::road) return true;
    }
  }
  return false;
}

// Calls f(id, cx, cy) for each database window: lattice every submap_interval_m,
// keeping windows with road in their central half.
template <typename F>
void for_each_window(const SemanticGrid& world, const WorldSpec& spec, F&& f) {
  const double step = spec.submap_interval_m;
  const auto cols = static_cast<std::size_t>(std::ceil(world.extent_x() / step));
  const auto rows = static_cast<std::size_t>(std::ceil(world.extent_y() / step));
  for (std::size_t r = 0; r < rows; ++r) {
    const double cy = step / 2.0 + static_cast<double>(r) * step;
    for (std::size_t c = 0; c < cols; ++c) {
      const double cx = step / 2.0 + static_cast<double>(c) * step;
      if (!has_road_near(world, cx, cy, spec.submap_side_m / 4.0)) continue;
      f(static_cast<SubmapId>(r * cols + c), cx, cy);
    }
  }
}

/// Rasterized city with its database feature mean attached.
inline SemanticGrid generate_world(const WorldSpec& spec) {
  auto g = rasterize_world(spec);
  std::vector<double> sum;
  std::size_t n = 0;
  for_each_window(g, spec, [&](SubmapId, double cx, double cy) {
    const auto f = window_feature(g, spec, cx, cy);
    if (sum.empty()) sum.assign(f.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) sum[i] += f[i];
    ++n;
  });
  for (auto& v : sum) v /= static_cast<double>(n);
  g.feature_mean = std::move(sum);
  return g;
}

/// Sliding windows every submap_interval_m; windows without road in their
/// central half are dropped. Ids are lattice indices (row-major).
inline std::vector<SubmapRecord> generate_database(const SemanticGrid& world, const WorldSpec& spec) {
  spec.validate();
  const DescriptorModel model(spec);
  std::vector<SubmapRecord> out;
  for_each_window(world, spec, [&](SubmapId id, double cx, double cy) {
    const auto feature = window_feature(world, spec, cx, cy);
    out.push_back({id, cx, cy, model.describe(feature, mix_seed(spec.seed, stream::kDbNoise, static_cast<std::uint64_t>(id)))});
  });
  return out;
}

/// Random road-following walk, one frame per query_spacing_m. Turns happen only
/// at intersections and never reverse direction. Headings are east = 0, CCW.
inline std::vector<QueryFrame> generate_trajectory(const SemanticGrid& world, const WorldSpec& spec, double length_m,
                                                   std::uint64_t walk_seed) {
  spec.validate();
  if (world.road_x.empty() || world.road_y.empty()) throw ValidationError("disconnected road network");
  const double step = spec.query_spacing_m;
  const double pitch = spec.road_grid_pitch_m;
  const double steps_per_block = pitch / step;
  const double offset_steps = (pitch / 2.0) / step;
  if (std::abs(steps_per_block - std::round(steps_per_block)) > 1e-9 ||
      std::abs(offset_steps - std::round(offset_steps)) > 1e-9) {
    throw ValidationError("road_grid_pitch_m / 2 must be a multiple of query_spacing_m");
  }
  const long per_block = std::lround(steps_per_block);
  const long off = std::lround(offset_steps);
  const long max_i = off + per_block * static_cast<long>(world.road_x.size() - 1);
  const long max_j = off + per_block * static_cast<long>(world.road_y.size() - 1);

  std::mt19937_64 rng(mix_seed(spec.seed, stream::kWalk, walk_seed));
  std::mt19937_64 mag_rng(mix_seed(spec.seed, stream::kMagnetometer, walk_seed));
  std::mt19937_64 toxic_rng(mix_seed(spec.seed, stream::kToxic, walk_seed));
  std::uniform_real_distribution<double> unit01(0.0, 1.0);
  const DescriptorModel model(spec);
  const double mag_half = deg2rad(spec.magnetometer_noise_deg);
  static constexpr std::array<std::array<long, 2>, 4> kDirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

  // Position in step units on the lattice of road points.
  long i = off + per_block * static_cast<long>(rng() % world.road_x.size());
  long j = off + per_block * static_cast<long>(rng() % world.road_y.size());
  auto on_x_road = [&](long a) { return (a - off) % per_block == 0 && a >= off && a <= max_i; };
  auto on_y_road = [&](long b) { return (b - off) % per_block == 0 && b >= off && b <= max_j; };
  auto can_move = [&](int d) {
    const long ni = i + kDirs[d][0], nj = j + kDirs[d][1];
    if (ni < off || ni > max_i || nj < off || nj > max_j) return false;
    return kDirs[d][0] != 0 ? on_y_road(j) : on_x_road(i);
  };
  auto choose = [&](int from) {
    std::vector<int> options;
    for (int d = 0; d < 4; ++d) {
      if (d != (from + 2) % 4 && can_move(d)) options.push_back(d);
    }
    if (options.empty()) options.push_back((from + 2) % 4);
    return options[rng() % options.size()];
  };
  int dir = 0;
  {
    std::vector<int> options;
    for (int d = 0; d < 4; ++d)
      if (can_move(d)) options.push_back(d);
    dir = options[rng() % options.size()];
  }

  const auto n = static_cast<std::size_t>(std::llround(length_m / step));
  std::vector<QueryFrame> frames;
  frames.reserve(n);
  double prev_theta = 0.0;
  for (std::size_t f = 0; f < n; ++f) {
    if (f > 0) {
      i += kDirs[dir][0];
      j += kDirs[dir][1];
      if (on_x_road(i) && on_y_road(j)) dir = choose(dir);
    }
    const double theta = wrap_angle(dir * std::numbers::pi / 2.0);
    QueryFrame q;
    q.index = static_cast<std::int64_t>(f);
    q.gt = Vec2{static_cast<double>(i) * step, static_cast<double>(j) * step};
    if (f > 0) {
      q.rel = {step, 0.0, wrap_angle(theta - prev_theta)};
      q.path_len_from_prev = step;
    }
    q.heading = {wrap_angle(theta + uniform_pm(mag_rng, mag_half)), true};
    const auto feature = window_feature(world, spec, q.gt->x, q.gt->y);
    const double scale = unit01(toxic_rng) < spec.toxic_query_rate ? spec.toxic_noise_mult : 1.0;
    q.descriptor = model.describe(feature, mix_seed(spec.seed, stream::kQueryNoise, mix_seed(walk_seed, f)), scale);
    frames.push_back(std::move(q));
    prev_theta = theta;
  }
  return frames;
}

struct GeneratedScenario {
  WorldSpec spec;
  SemanticGrid world;
  std::vector<SubmapRecord> database;
  std::vector<QueryFrame> queries;
};

inline GeneratedScenario generate_scenario(const WorldSpec& spec) {
  GeneratedScenario s;
  s.spec = spec;
  s.world = generate_world(spec);
  s.database = generate_database(s.world, spec);
  s.queries = generate_trajectory(s.world, spec, spec.trajectory_length_m, spec.seed);
  return s;
}

}  // namespace stpe::synth
