#include "angio/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace angio {

namespace {

struct CtrlPoint {
  double x, y, z;  // continuous voxel coordinates
};

CtrlPoint bezier(const CtrlPoint& p0, const CtrlPoint& p1, const CtrlPoint& p2, const CtrlPoint& p3, double t) {
  const double u = 1.0 - t;
  const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
  return {b0 * p0.x + b1 * p1.x + b2 * p2.x + b3 * p3.x, b0 * p0.y + b1 * p1.y + b2 * p2.y + b3 * p3.y,
          b0 * p0.z + b1 * p1.z + b2 * p2.z + b3 * p3.z};
}

void stamp_sphere(VoxelGrid& g, const CtrlPoint& c, double radius_vox) {
  const std::int64_t r = static_cast<std::int64_t>(std::ceil(radius_vox));
  const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(c.x)) - r);
  const std::int64_t x1 = std::min(g.dims[0] - 1, static_cast<std::int64_t>(std::ceil(c.x)) + r);
  const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(c.y)) - r);
  const std::int64_t y1 = std::min(g.dims[1] - 1, static_cast<std::int64_t>(std::ceil(c.y)) + r);
  const std::int64_t z0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(c.z)) - r);
  const std::int64_t z1 = std::min(g.dims[2] - 1, static_cast<std::int64_t>(std::ceil(c.z)) + r);
  const double r2 = radius_vox * radius_vox;
  for (std::int64_t z = z0; z <= z1; ++z)
    for (std::int64_t y = y0; y <= y1; ++y)
      for (std::int64_t x = x0; x <= x1; ++x) {
        const double dx = static_cast<double>(x) - c.x;
        const double dy = static_cast<double>(y) - c.y;
        const double dz = static_cast<double>(z) - c.z;
        if (dx * dx + dy * dy + dz * dz <= r2) g.at(x, y, z) = 1.0;
      }
}

struct CurveSample {
  CtrlPoint pos;
  double radius;
};

// Sweeps a Bezier segment with a linearly tapering brush; sampling is
// dense enough (quarter radius) that consecutive spheres overlap, which
// is what guarantees 26-connectivity along the tube.
std::vector<CurveSample> sweep_curve(VoxelGrid& g, const CtrlPoint& p0, const CtrlPoint& p1, const CtrlPoint& p2,
                                     const CtrlPoint& p3, double r_start, double r_end) {
  const double approx_len = std::hypot(p3.x - p0.x, std::hypot(p3.y - p0.y, p3.z - p0.z)) + 1.0;
  const double min_r = std::min(r_start, r_end);
  const int steps = std::max(8, static_cast<int>(approx_len / std::max(0.25 * min_r, 0.25)));
  std::vector<CurveSample> samples;
  samples.reserve(static_cast<std::size_t>(steps + 1));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const CtrlPoint c = bezier(p0, p1, p2, p3, t);
    const double r = r_start + (r_end - r_start) * t;
    stamp_sphere(g, c, r);
    samples.push_back({c, r});
  }
  return samples;
}

}  // namespace

void PhantomParams::validate(const std::array<std::int64_t, 3>& dims) const {
  if (branch_count < 0) throw std::invalid_argument("PhantomParams: branch_count must be >= 0");
  if (!(trunk_radius_vox[0] > 0) || trunk_radius_vox[1] < trunk_radius_vox[0]) {
    throw std::invalid_argument("PhantomParams: bad trunk radius range");
  }
  const auto min_dim = std::min({dims[0], dims[1], dims[2]});
  const double scale = static_cast<double>(min_dim) / static_cast<double>(radius_scale_reference);
  if (trunk_radius_vox[1] * scale * 4.0 > static_cast<double>(min_dim)) {
    throw std::invalid_argument("PhantomParams: trunk radius does not fit grid of extent " + std::to_string(min_dim));
  }
}

VoxelGrid generate_phantom(Rng& rng, const std::array<std::int64_t, 3>& dims, const std::array<double, 3>& extent_mm,
                           const PhantomParams& params) {
  params.validate(dims);
  VoxelGrid g = VoxelGrid::zeros(dims, extent_mm);
  const double nx = static_cast<double>(dims[0]);
  const double ny = static_cast<double>(dims[1]);
  const double nz = static_cast<double>(dims[2]);
  const double scale = static_cast<double>(std::min({dims[0], dims[1], dims[2]})) /
                       static_cast<double>(params.radius_scale_reference);

  auto jitter = [&](double span) { return rng.uniform(-params.curvature * span, params.curvature * span); };

  // Trunk: top to bottom with lateral wander, kept away from the faces so
  // brushes stay in-grid.
  const double margin = 0.15;
  CtrlPoint t0{nx * rng.uniform(0.35, 0.65), ny * rng.uniform(0.35, 0.65), nz * (1.0 - margin)};
  CtrlPoint t3{nx * rng.uniform(0.3, 0.7), ny * rng.uniform(0.3, 0.7), nz * margin};
  CtrlPoint t1{t0.x + jitter(nx), t0.y + jitter(ny), t0.z + (t3.z - t0.z) * 0.33};
  CtrlPoint t2{t3.x + jitter(nx), t3.y + jitter(ny), t0.z + (t3.z - t0.z) * 0.66};
  t1.x = std::clamp(t1.x, nx * 0.1, nx * 0.9);
  t1.y = std::clamp(t1.y, ny * 0.1, ny * 0.9);
  t2.x = std::clamp(t2.x, nx * 0.1, nx * 0.9);
  t2.y = std::clamp(t2.y, ny * 0.1, ny * 0.9);

  const double trunk_r0 = rng.uniform(params.trunk_radius_vox[0], params.trunk_radius_vox[1]) * scale;
  const double trunk_r1 = std::max(params.min_radius_vox * scale, trunk_r0 * rng.uniform(0.55, 0.75));
  const auto trunk = sweep_curve(g, t0, t1, t2, t3, trunk_r0, trunk_r1);

  for (int b = 0; b < params.branch_count; ++b) {
    // Anchor strictly on the trunk so the branch tube overlaps it.
    const auto& anchor = trunk[static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(trunk.size()) / 6,
                        static_cast<std::int64_t>(trunk.size()) * 5 / 6))];
    const double factor = rng.uniform(params.branch_radius_factor[0], params.branch_radius_factor[1]);
    const double r_start = std::max(params.min_radius_vox * scale, anchor.radius * factor);
    const double r_end = std::max(params.min_radius_vox * scale, r_start * 0.6);

    const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double len = rng.uniform(0.25, 0.45) * std::min(nx, ny);
    CtrlPoint b0 = anchor.pos;
    CtrlPoint b3{b0.x + std::cos(theta) * len, b0.y + std::sin(theta) * len,
                 b0.z - rng.uniform(0.1, 0.5) * len};
    b3.x = std::clamp(b3.x, nx * 0.08, nx * 0.92);
    b3.y = std::clamp(b3.y, ny * 0.08, ny * 0.92);
    b3.z = std::clamp(b3.z, nz * 0.08, nz * 0.92);
    CtrlPoint b1{b0.x + (b3.x - b0.x) * 0.3 + jitter(nx * 0.4), b0.y + (b3.y - b0.y) * 0.3 + jitter(ny * 0.4),
                 b0.z + (b3.z - b0.z) * 0.3};
    CtrlPoint b2{b0.x + (b3.x - b0.x) * 0.7 + jitter(nx * 0.4), b0.y + (b3.y - b0.y) * 0.7 + jitter(ny * 0.4),
                 b0.z + (b3.z - b0.z) * 0.7};
    sweep_curve(g, b0, b1, b2, b3, r_start, r_end);
  }
  return g;
}

std::pair<std::int64_t, std::int64_t> largest_component_26(const VoxelGrid& binary) {
  const auto& d = binary.dims;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(binary.numel()), 0);
  std::int64_t total = 0, largest = 0;
  std::vector<std::int64_t> stack;
  for (std::int64_t start = 0; start < binary.numel(); ++start) {
    if (binary.values[static_cast<std::size_t>(start)] == 0.0) continue;
    ++total;
    if (seen[static_cast<std::size_t>(start)]) continue;
    std::int64_t size = 0;
    stack.push_back(start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const std::int64_t cur = stack.back();
      stack.pop_back();
      ++size;
      const std::int64_t x = cur % d[0];
      const std::int64_t y = (cur / d[0]) % d[1];
      const std::int64_t z = cur / (d[0] * d[1]);
      for (std::int64_t dz = -1; dz <= 1; ++dz)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
          for (std::int64_t dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy && !dz) continue;
            const std::int64_t nx2 = x + dx, ny2 = y + dy, nz2 = z + dz;
            if (nx2 < 0 || nx2 >= d[0] || ny2 < 0 || ny2 >= d[1] || nz2 < 0 || nz2 >= d[2]) continue;
            const std::int64_t idx = nx2 + d[0] * (ny2 + d[1] * nz2);
            if (seen[static_cast<std::size_t>(idx)] || binary.values[static_cast<std::size_t>(idx)] == 0.0) continue;
            seen[static_cast<std::size_t>(idx)] = 1;
            stack.push_back(idx);
          }
    }
    largest = std::max(largest, size);
  }
  return {largest, total};
}

}  // namespace angio
