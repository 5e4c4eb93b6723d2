#pragma once

#include "angio/geometry.hpp"
#include "angio/rng.hpp"

namespace angio {

// Tunables for the tubular-tree phantom. Radii are in voxels; the
// defaults are calibrated for 32^3 grids and scale linearly with the
// grid resolution via radius_scale_reference.
struct PhantomParams {
  int branch_count = 3;              // side branches off the trunk (>= 0)
  double trunk_radius_vox[2] = {1.3, 1.9};
  double branch_radius_factor[2] = {0.55, 0.8};
  double min_radius_vox = 0.7;
  double curvature = 0.35;           // lateral control-point jitter, fraction of extent
  std::int64_t radius_scale_reference = 32;

  void validate(const std::array<std::int64_t, 3>& dims) const;
};

// Single 26-connected tree of tubular segments: one curved trunk spanning
// the grid vertically plus curved side branches of decreasing radius.
// Deterministic under the rng seed.
VoxelGrid generate_phantom(Rng& rng, const std::array<std::int64_t, 3>& dims,
                           const std::array<double, 3>& extent_mm, const PhantomParams& params = {});

// Foreground voxel count of the largest 26-connected component and the
// total; equal iff the foreground is one component.
std::pair<std::int64_t, std::int64_t> largest_component_26(const VoxelGrid& binary);

}  // namespace angio
