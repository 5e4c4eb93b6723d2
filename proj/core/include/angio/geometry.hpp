#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "angio/rng.hpp"

namespace angio {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
  Vec3 normalized() const;
};

// Scalar field on a regular grid centered at the world origin,
// x-fastest storage order: values[ix + nx*(iy + ny*iz)].
struct VoxelGrid {
  std::array<std::int64_t, 3> dims{0, 0, 0};
  std::array<double, 3> extent_mm{0, 0, 0};
  std::vector<double> values;

  static VoxelGrid zeros(std::array<std::int64_t, 3> dims, std::array<double, 3> extent_mm);
  std::int64_t numel() const { return dims[0] * dims[1] * dims[2]; }
  std::array<double, 3> spacing_mm() const {
    return {extent_mm[0] / static_cast<double>(dims[0]), extent_mm[1] / static_cast<double>(dims[1]),
            extent_mm[2] / static_cast<double>(dims[2])};
  }
  double& at(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
    return values[static_cast<std::size_t>(ix + dims[0] * (iy + dims[1] * iz))];
  }
  double at(std::int64_t ix, std::int64_t iy, std::int64_t iz) const {
    return values[static_cast<std::size_t>(ix + dims[0] * (iy + dims[1] * iz))];
  }
  // World position of a voxel center.
  Vec3 voxel_center(std::int64_t ix, std::int64_t iy, std::int64_t iz) const;
  void validate() const;
};

// Cone-beam acquisition. Primary angle rotates the source-detector axis
// about the world z axis (vertical), secondary about the gantry-mounted
// transverse axis; the detector stays perpendicular to the source-origin
// ray. At zero angles the source sits at (0, -dso, 0), detector u runs
// along +x (horizontal) and v along +z (vertical).
struct ProjectionGeometry {
  double dsd_mm = 0;
  double dso_mm = 0;
  double primary_deg = 0;
  double secondary_deg = 0;
  std::array<std::int64_t, 2> detector_dims{0, 0};
  std::array<double, 2> detector_spacing_mm{0, 0};

  void validate() const;
  Vec3 source_position() const;
  Vec3 detector_center() const;
  Vec3 detector_u_axis() const;  // unit
  Vec3 detector_v_axis() const;  // unit
  Vec3 pixel_center(std::int64_t iu, std::int64_t iv) const;
};

// Inter-acquisition motion: rotations about the two gantry-angle axes
// (world z and world x) around the world origin, plus an in-plane
// translation along the nominal detector axes (world x horizontal,
// world z vertical). tz is fixed at zero.
struct RigidTransform {
  double rot_primary_deg = 0;
  double rot_secondary_deg = 0;
  double tx_mm = 0;
  double ty_mm = 0;

  Vec3 apply(const Vec3& p) const;
  Vec3 apply_inverse(const Vec3& p) const;
  bool is_identity() const {
    return rot_primary_deg == 0 && rot_secondary_deg == 0 && tx_mm == 0 && ty_mm == 0;
  }
};

struct DetectorImage {
  std::array<std::int64_t, 2> dims{0, 0};
  std::array<double, 2> spacing_mm{0, 0};
  std::vector<double> values;

  static DetectorImage zeros(std::array<std::int64_t, 2> dims, std::array<double, 2> spacing_mm);
  std::int64_t numel() const { return dims[0] * dims[1]; }
  double& at(std::int64_t iu, std::int64_t iv) { return values[static_cast<std::size_t>(iu + dims[0] * iv)]; }
  double at(std::int64_t iu, std::int64_t iv) const { return values[static_cast<std::size_t>(iu + dims[0] * iv)]; }
};

enum class Interpolation { kNearest, kTrilinear };

// Line integrals by fixed-step trilinear sampling along source->pixel rays;
// step = 0.5 * min voxel spacing, samples at segment midpoints inside the
// volume bounding box. Rays that miss the box produce 0.
DetectorImage forward_project(const VoxelGrid& volume, const ProjectionGeometry& geom);

// Exact discrete adjoint of forward_project: the same rays, step positions
// and interpolation weights, scattered instead of gathered.
VoxelGrid back_project(const DetectorImage& image, const ProjectionGeometry& geom,
                       std::array<std::int64_t, 3> target_dims, std::array<double, 3> target_extent);

// Output voxel at world p holds the input sampled at t^-1(p); samples
// outside the grid read as zero. With invert=true the content moves by
// t^-1 instead (the exact analytic inverse, which is not representable
// as another RigidTransform because the translation leaves the nominal
// detector plane after rotation).
VoxelGrid apply_rigid_transform(const VoxelGrid& volume, const RigidTransform& t, Interpolation interpolation,
                                bool invert = false);

// Uniform sampling ranges for acquisition geometry and motion. Defaults
// reproduce the production two-plane protocol; the detector block is
// overridden per run configuration (resolution and matching spacing scale).
struct AcquisitionRanges {
  double dsd1_mm[2] = {970.0, 1010.0};
  double dsd2_mm[2] = {1050.0, 1070.0};
  double dso1_mm[2] = {745.0, 785.0};
  double dso2_delta_mm[2] = {-3.0, 3.0};
  double primary1_deg[2] = {18.0, 42.0};
  double secondary1_deg[2] = {-8.0, 8.0};
  double primary2_deg[2] = {-8.0, 8.0};
  double secondary2_deg[2] = {18.0, 42.0};
  double detector_spacing_mm[2] = {0.2769, 0.2789};
  std::array<std::int64_t, 2> detector_dims{512, 512};
  // Physical pixel pitch multiplier; lower-resolution presets scale the
  // pitch up so the detector keeps its field of view.
  double spacing_scale = 1.0;
};

struct MotionRanges {
  double rot_deg[2] = {-10.0, 10.0};
  double trans_mm[2] = {-8.0, 8.0};
};

// Both planes of one draw share the detector spacing sample.
std::pair<ProjectionGeometry, ProjectionGeometry> sample_acquisition(Rng& rng,
                                                                     const AcquisitionRanges& ranges = {});
RigidTransform sample_motion(Rng& rng, const MotionRanges& ranges = {});

}  // namespace angio
