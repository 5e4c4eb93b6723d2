#include "angio/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace angio {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Basis {
  Vec3 ex, ey, ez;  // columns of R = Rz(primary) * Rx(secondary)
};

Basis rotation_basis(double primary_deg, double secondary_deg) {
  const double a = primary_deg * kDegToRad;
  const double b = secondary_deg * kDegToRad;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  // Rz(a) * Rx(b)
  Basis r;
  r.ex = {ca, sa, 0.0};
  r.ey = {-sa * cb, ca * cb, sb};
  r.ez = {sa * sb, -ca * sb, cb};
  return r;
}

Vec3 rotate(const Basis& r, const Vec3& p) {
  return {r.ex.x * p.x + r.ey.x * p.y + r.ez.x * p.z, r.ex.y * p.x + r.ey.y * p.y + r.ez.y * p.z,
          r.ex.z * p.x + r.ey.z * p.y + r.ez.z * p.z};
}

Vec3 rotate_transposed(const Basis& r, const Vec3& p) {
  return {r.ex.dot(p), r.ey.dot(p), r.ez.dot(p)};
}

}  // namespace

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  return {x / n, y / n, z / n};
}

VoxelGrid VoxelGrid::zeros(std::array<std::int64_t, 3> dims, std::array<double, 3> extent_mm) {
  VoxelGrid g;
  g.dims = dims;
  g.extent_mm = extent_mm;
  g.values.assign(static_cast<std::size_t>(g.numel()), 0.0);
  g.validate();
  return g;
}

Vec3 VoxelGrid::voxel_center(std::int64_t ix, std::int64_t iy, std::int64_t iz) const {
  const auto sp = spacing_mm();
  return {(static_cast<double>(ix) + 0.5) * sp[0] - extent_mm[0] / 2.0,
          (static_cast<double>(iy) + 0.5) * sp[1] - extent_mm[1] / 2.0,
          (static_cast<double>(iz) + 0.5) * sp[2] - extent_mm[2] / 2.0};
}

void VoxelGrid::validate() const {
  for (int k = 0; k < 3; ++k) {
    if (dims[static_cast<std::size_t>(k)] < 1) throw std::invalid_argument("VoxelGrid: dims must be positive");
    if (!(extent_mm[static_cast<std::size_t>(k)] > 0)) throw std::invalid_argument("VoxelGrid: extent must be positive");
  }
  if (static_cast<std::int64_t>(values.size()) != numel()) {
    throw std::invalid_argument("VoxelGrid: value count does not match dims");
  }
}

void ProjectionGeometry::validate() const {
  if (!(dso_mm > 0) || !(dsd_mm > dso_mm)) {
    throw std::invalid_argument("ProjectionGeometry: need dsd > dso > 0, got dsd=" + std::to_string(dsd_mm) +
                                " dso=" + std::to_string(dso_mm));
  }
  if (detector_dims[0] < 1 || detector_dims[1] < 1) {
    throw std::invalid_argument("ProjectionGeometry: detector dims must be positive");
  }
  if (!(detector_spacing_mm[0] > 0) || !(detector_spacing_mm[1] > 0)) {
    throw std::invalid_argument("ProjectionGeometry: detector spacing must be positive");
  }
}

Vec3 ProjectionGeometry::source_position() const {
  const Basis r = rotation_basis(primary_deg, secondary_deg);
  return rotate(r, {0.0, -dso_mm, 0.0});
}

Vec3 ProjectionGeometry::detector_center() const {
  const Basis r = rotation_basis(primary_deg, secondary_deg);
  return rotate(r, {0.0, dsd_mm - dso_mm, 0.0});
}

Vec3 ProjectionGeometry::detector_u_axis() const {
  const Basis r = rotation_basis(primary_deg, secondary_deg);
  return rotate(r, {1.0, 0.0, 0.0});
}

Vec3 ProjectionGeometry::detector_v_axis() const {
  const Basis r = rotation_basis(primary_deg, secondary_deg);
  return rotate(r, {0.0, 0.0, 1.0});
}

Vec3 ProjectionGeometry::pixel_center(std::int64_t iu, std::int64_t iv) const {
  const double u = (static_cast<double>(iu) + 0.5 - static_cast<double>(detector_dims[0]) / 2.0) * detector_spacing_mm[0];
  const double v = (static_cast<double>(iv) + 0.5 - static_cast<double>(detector_dims[1]) / 2.0) * detector_spacing_mm[1];
  return detector_center() + detector_u_axis() * u + detector_v_axis() * v;
}

Vec3 RigidTransform::apply(const Vec3& p) const {
  const Basis r = rotation_basis(rot_primary_deg, rot_secondary_deg);
  const Vec3 rp = rotate(r, p);
  return {rp.x + tx_mm, rp.y, rp.z + ty_mm};
}

Vec3 RigidTransform::apply_inverse(const Vec3& p) const {
  const Basis r = rotation_basis(rot_primary_deg, rot_secondary_deg);
  return rotate_transposed(r, {p.x - tx_mm, p.y, p.z - ty_mm});
}

DetectorImage DetectorImage::zeros(std::array<std::int64_t, 2> dims, std::array<double, 2> spacing_mm) {
  DetectorImage im;
  im.dims = dims;
  im.spacing_mm = spacing_mm;
  im.values.assign(static_cast<std::size_t>(im.numel()), 0.0);
  return im;
}

namespace {

// Slab intersection of a ray p(t) = origin + t*dir with the volume box.
// Returns false when the ray misses.
bool intersect_box(const Vec3& origin, const Vec3& dir, const std::array<double, 3>& half_extent, double& t0,
                   double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  const double o[3] = {origin.x, origin.y, origin.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  for (int k = 0; k < 3; ++k) {
    const double lo = -half_extent[static_cast<std::size_t>(k)];
    const double hi = half_extent[static_cast<std::size_t>(k)];
    if (d[k] == 0.0) {
      if (o[k] < lo || o[k] > hi) return false;
      continue;
    }
    double ta = (lo - o[k]) / d[k];
    double tb = (hi - o[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return false;
  }
  return t0 < t1;
}

struct TrilinearCell {
  std::int64_t base[8];
  double weight[8];
  int count = 0;
};

// Corner indices and weights for a world-space sample; weights are
// pre-multiplied by `scale` so gather and scatter share the exact same
// floating-point products.
inline void trilinear_cell(const VoxelGrid& g, const Vec3& p, double scale, TrilinearCell& cell) {
  const auto sp = g.spacing_mm();
  const double cx = (p.x + g.extent_mm[0] / 2.0) / sp[0] - 0.5;
  const double cy = (p.y + g.extent_mm[1] / 2.0) / sp[1] - 0.5;
  const double cz = (p.z + g.extent_mm[2] / 2.0) / sp[2] - 0.5;
  const double fx = std::floor(cx), fy = std::floor(cy), fz = std::floor(cz);
  const std::int64_t ix = static_cast<std::int64_t>(fx);
  const std::int64_t iy = static_cast<std::int64_t>(fy);
  const std::int64_t iz = static_cast<std::int64_t>(fz);
  const double wx1 = cx - fx, wy1 = cy - fy, wz1 = cz - fz;
  const double wx0 = 1.0 - wx1, wy0 = 1.0 - wy1, wz0 = 1.0 - wz1;
  const double wx[2] = {wx0, wx1}, wy[2] = {wy0, wy1}, wz[2] = {wz0, wz1};
  cell.count = 0;
  for (int dz = 0; dz < 2; ++dz) {
    const std::int64_t z = iz + dz;
    if (z < 0 || z >= g.dims[2]) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const std::int64_t y = iy + dy;
      if (y < 0 || y >= g.dims[1]) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const std::int64_t x = ix + dx;
        if (x < 0 || x >= g.dims[0]) continue;
        const int c = cell.count++;
        cell.base[c] = x + g.dims[0] * (y + g.dims[1] * z);
        cell.weight[c] = (wx[dx] * wy[dy] * wz[dz]) * scale;
      }
    }
  }
}

struct RaySteps {
  Vec3 origin;
  Vec3 dir;  // unit
  double t0 = 0, t1 = 0;
  std::int64_t count = 0;
  double step = 0;
};

bool ray_through_pixel(const VoxelGrid& vol, const ProjectionGeometry& geom, const Vec3& source, const Vec3& pixel,
                       RaySteps& ray) {
  (void)geom;
  ray.origin = source;
  ray.dir = (pixel - source).normalized();
  const std::array<double, 3> half{vol.extent_mm[0] / 2.0, vol.extent_mm[1] / 2.0, vol.extent_mm[2] / 2.0};
  if (!intersect_box(ray.origin, ray.dir, half, ray.t0, ray.t1)) return false;
  const auto sp = vol.spacing_mm();
  ray.step = 0.5 * std::min({sp[0], sp[1], sp[2]});
  ray.count = static_cast<std::int64_t>(std::ceil((ray.t1 - ray.t0) / ray.step));
  return ray.count > 0;
}

}  // namespace

DetectorImage forward_project(const VoxelGrid& volume, const ProjectionGeometry& geom) {
  volume.validate();
  geom.validate();
  DetectorImage image = DetectorImage::zeros(geom.detector_dims, geom.detector_spacing_mm);
  const Vec3 source = geom.source_position();
  const Vec3 det_center = geom.detector_center();
  const Vec3 u_axis = geom.detector_u_axis();
  const Vec3 v_axis = geom.detector_v_axis();
  const std::int64_t nu = geom.detector_dims[0];
  const std::int64_t nv = geom.detector_dims[1];

  auto project_rows = [&](std::int64_t v_begin, std::int64_t v_end) {
    TrilinearCell cell;
    for (std::int64_t iv = v_begin; iv < v_end; ++iv) {
      const double v = (static_cast<double>(iv) + 0.5 - static_cast<double>(nv) / 2.0) * geom.detector_spacing_mm[1];
      for (std::int64_t iu = 0; iu < nu; ++iu) {
        const double u = (static_cast<double>(iu) + 0.5 - static_cast<double>(nu) / 2.0) * geom.detector_spacing_mm[0];
        const Vec3 pixel = det_center + u_axis * u + v_axis * v;
        RaySteps ray;
        if (!ray_through_pixel(volume, geom, source, pixel, ray)) continue;
        double acc = 0.0;
        for (std::int64_t k = 0; k < ray.count; ++k) {
          const double t = ray.t0 + (static_cast<double>(k) + 0.5) * ray.step;
          const Vec3 p = ray.origin + ray.dir * t;
          trilinear_cell(volume, p, ray.step, cell);
          for (int c = 0; c < cell.count; ++c) {
            acc += cell.weight[c] * volume.values[static_cast<std::size_t>(cell.base[c])];
          }
        }
        image.at(iu, iv) = acc;
      }
    }
  };

  const unsigned hw_threads = std::thread::hardware_concurrency();
  const std::int64_t n_threads = std::min<std::int64_t>(nv, hw_threads ? hw_threads : 1);
  if (n_threads <= 1 || nv * nu < 4096) {
    project_rows(0, nv);
  } else {
    std::vector<std::thread> workers;
    const std::int64_t chunk = (nv + n_threads - 1) / n_threads;
    for (std::int64_t t = 0; t < n_threads; ++t) {
      const std::int64_t lo = t * chunk;
      const std::int64_t hi = std::min(nv, lo + chunk);
      if (lo >= hi) break;
      workers.emplace_back(project_rows, lo, hi);
    }
    for (auto& w : workers) w.join();
  }
  return image;
}

VoxelGrid back_project(const DetectorImage& image, const ProjectionGeometry& geom,
                       std::array<std::int64_t, 3> target_dims, std::array<double, 3> target_extent) {
  geom.validate();
  if (image.dims != geom.detector_dims) {
    throw std::invalid_argument("back_project: image dims do not match geometry detector dims");
  }
  VoxelGrid volume = VoxelGrid::zeros(target_dims, target_extent);
  const Vec3 source = geom.source_position();
  const Vec3 det_center = geom.detector_center();
  const Vec3 u_axis = geom.detector_u_axis();
  const Vec3 v_axis = geom.detector_v_axis();
  const std::int64_t nu = geom.detector_dims[0];
  const std::int64_t nv = geom.detector_dims[1];

  // Scatter writes collide between rays, so this pass stays sequential;
  // the pixel loop order fixes the accumulation order deterministically.
  TrilinearCell cell;
  for (std::int64_t iv = 0; iv < nv; ++iv) {
    const double v = (static_cast<double>(iv) + 0.5 - static_cast<double>(nv) / 2.0) * geom.detector_spacing_mm[1];
    for (std::int64_t iu = 0; iu < nu; ++iu) {
      const double value = image.at(iu, iv);
      const double u = (static_cast<double>(iu) + 0.5 - static_cast<double>(nu) / 2.0) * geom.detector_spacing_mm[0];
      const Vec3 pixel = det_center + u_axis * u + v_axis * v;
      RaySteps ray;
      if (!ray_through_pixel(volume, geom, source, pixel, ray)) continue;
      for (std::int64_t k = 0; k < ray.count; ++k) {
        const double t = ray.t0 + (static_cast<double>(k) + 0.5) * ray.step;
        const Vec3 p = ray.origin + ray.dir * t;
        trilinear_cell(volume, p, ray.step, cell);
        for (int c = 0; c < cell.count; ++c) {
          volume.values[static_cast<std::size_t>(cell.base[c])] += cell.weight[c] * value;
        }
      }
    }
  }
  return volume;
}

VoxelGrid apply_rigid_transform(const VoxelGrid& volume, const RigidTransform& t, Interpolation interpolation,
                                bool invert) {
  volume.validate();
  VoxelGrid out = VoxelGrid::zeros(volume.dims, volume.extent_mm);
  const auto sp = volume.spacing_mm();
  for (std::int64_t iz = 0; iz < volume.dims[2]; ++iz) {
    for (std::int64_t iy = 0; iy < volume.dims[1]; ++iy) {
      for (std::int64_t ix = 0; ix < volume.dims[0]; ++ix) {
        const Vec3 p = out.voxel_center(ix, iy, iz);
        const Vec3 q = invert ? t.apply(p) : t.apply_inverse(p);
        double value = 0.0;
        if (interpolation == Interpolation::kNearest) {
          const std::int64_t jx = static_cast<std::int64_t>(std::floor((q.x + volume.extent_mm[0] / 2.0) / sp[0]));
          const std::int64_t jy = static_cast<std::int64_t>(std::floor((q.y + volume.extent_mm[1] / 2.0) / sp[1]));
          const std::int64_t jz = static_cast<std::int64_t>(std::floor((q.z + volume.extent_mm[2] / 2.0) / sp[2]));
          if (jx >= 0 && jx < volume.dims[0] && jy >= 0 && jy < volume.dims[1] && jz >= 0 && jz < volume.dims[2]) {
            value = volume.at(jx, jy, jz);
          }
        } else {
          TrilinearCell cell;
          trilinear_cell(volume, q, 1.0, cell);
          for (int c = 0; c < cell.count; ++c) {
            value += cell.weight[c] * volume.values[static_cast<std::size_t>(cell.base[c])];
          }
        }
        out.at(ix, iy, iz) = value;
      }
    }
  }
  return out;
}

std::pair<ProjectionGeometry, ProjectionGeometry> sample_acquisition(Rng& rng, const AcquisitionRanges& r) {
  ProjectionGeometry g1, g2;
  g1.dsd_mm = rng.uniform(r.dsd1_mm[0], r.dsd1_mm[1]);
  g1.dso_mm = rng.uniform(r.dso1_mm[0], r.dso1_mm[1]);
  g1.primary_deg = rng.uniform(r.primary1_deg[0], r.primary1_deg[1]);
  g1.secondary_deg = rng.uniform(r.secondary1_deg[0], r.secondary1_deg[1]);

  g2.dsd_mm = rng.uniform(r.dsd2_mm[0], r.dsd2_mm[1]);
  g2.dso_mm = g1.dso_mm + rng.uniform(r.dso2_delta_mm[0], r.dso2_delta_mm[1]);
  g2.primary_deg = rng.uniform(r.primary2_deg[0], r.primary2_deg[1]);
  g2.secondary_deg = rng.uniform(r.secondary2_deg[0], r.secondary2_deg[1]);

  const double spacing = rng.uniform(r.detector_spacing_mm[0], r.detector_spacing_mm[1]) * r.spacing_scale;
  g1.detector_dims = r.detector_dims;
  g2.detector_dims = r.detector_dims;
  g1.detector_spacing_mm = {spacing, spacing};
  g2.detector_spacing_mm = {spacing, spacing};
  g1.validate();
  g2.validate();
  return {g1, g2};
}

RigidTransform sample_motion(Rng& rng, const MotionRanges& r) {
  RigidTransform t;
  t.rot_primary_deg = rng.uniform(r.rot_deg[0], r.rot_deg[1]);
  t.rot_secondary_deg = rng.uniform(r.rot_deg[0], r.rot_deg[1]);
  t.tx_mm = rng.uniform(r.trans_mm[0], r.trans_mm[1]);
  t.ty_mm = rng.uniform(r.trans_mm[0], r.trans_mm[1]);
  return t;
}

}  // namespace angio
