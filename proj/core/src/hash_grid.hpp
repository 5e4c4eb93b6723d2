#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

namespace angio::detail {

inline double sq_dist(const std::array<double, 3>& a, const std::array<double, 3>& b, int dims) {
  double s = 0;
  for (int k = 0; k < dims; ++k) {
    const double d = a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)];
    s += d * d;
  }
  return s;
}

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

// Uniform hash grid over points; cell edge = `cell`. Queries either test
// existence within a radius or find the exact nearest-neighbor distance.
class HashGrid {
 public:
  HashGrid(std::vector<std::array<double, 3>> pts, int dims, double cell)
      : points_(std::move(pts)), dims_(dims), cell_(cell) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const CellKey k = key_of(points_[i]);
      cells_[k].push_back(i);
      lo_ = {std::min(lo_[0], k.x), std::min(lo_[1], k.y), std::min(lo_[2], k.z)};
      hi_ = {std::max(hi_[0], k.x), std::max(hi_[1], k.y), std::max(hi_[2], k.z)};
    }
  }

  bool any_within(const std::array<double, 3>& q, double radius) const {
    const double r2 = radius * radius;
    const CellKey c = key_of(q);
    const std::int64_t reach = static_cast<std::int64_t>(std::floor(radius / cell_)) + 1;
    const std::int64_t zreach = dims_ == 3 ? reach : 0;
    for (std::int64_t dz = -zreach; dz <= zreach; ++dz)
      for (std::int64_t dy = -reach; dy <= reach; ++dy)
        for (std::int64_t dx = -reach; dx <= reach; ++dx) {
          const auto it = cells_.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (const std::size_t i : it->second) {
            if (sq_dist(points_[i], q, dims_) <= r2) return true;
          }
        }
    return false;
  }

  double nearest_distance(const std::array<double, 3>& q) const {
    const CellKey c = key_of(q);
    // Ring that reaches the farthest occupied cell; by then a finite best
    // is guaranteed.
    const std::int64_t last_ring =
        std::max({std::max(std::abs(c.x - lo_[0]), std::abs(c.x - hi_[0])),
                  std::max(std::abs(c.y - lo_[1]), std::abs(c.y - hi_[1])),
                  std::max(std::abs(c.z - lo_[2]), std::abs(c.z - hi_[2]))});
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t ring = 0; ring <= last_ring; ++ring) {
      const std::int64_t zring = dims_ == 3 ? ring : 0;
      for (std::int64_t dz = -zring; dz <= zring; ++dz)
        for (std::int64_t dy = -ring; dy <= ring; ++dy)
          for (std::int64_t dx = -ring; dx <= ring; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;  // shell only
            const auto it = cells_.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
            if (it == cells_.end()) continue;
            for (const std::size_t i : it->second) {
              best = std::min(best, sq_dist(points_[i], q, dims_));
            }
          }
      // Points in later shells are at least ring*cell away.
      if (std::isfinite(best)) {
        const double bound = static_cast<double>(ring) * cell_;
        if (best <= bound * bound) break;
      }
    }
    return std::sqrt(best);
  }

 private:
  CellKey key_of(const std::array<double, 3>& p) const {
    return CellKey{static_cast<std::int64_t>(std::floor(p[0] / cell_)),
                   static_cast<std::int64_t>(std::floor(p[1] / cell_)),
                   dims_ == 3 ? static_cast<std::int64_t>(std::floor(p[2] / cell_)) : 0};
  }

  std::vector<std::array<double, 3>> points_;
  int dims_;
  double cell_;
  std::array<std::int64_t, 3> lo_{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::max(),
                                  std::numeric_limits<std::int64_t>::max()};
  std::array<std::int64_t, 3> hi_{std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::min(),
                                  std::numeric_limits<std::int64_t>::min()};
  std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> cells_;
};

inline double adaptive_cell(double span, std::size_t n) {
  const double denom = std::cbrt(static_cast<double>(n));
  return std::max(span / std::max(denom, 1.0), 1e-9);
}

}  // namespace angio::detail
