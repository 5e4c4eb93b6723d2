#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "angio/geometry.hpp"

namespace angio {

// Foreground coordinates in mm, voxel/pixel centers: (index + 0.5) *
// spacing - extent / 2. dims() is 2 for detector images, 3 for volumes.
struct PointSet {
  std::vector<std::array<double, 3>> points;  // z unused in 2D
  int dims = 3;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

PointSet pointset_from_volume(const VoxelGrid& binary);
PointSet pointset_from_image(const DetectorImage& binary);

struct MetricReport {
  int plane = 0;  // 0 = volumetric, 1..k = projection planes
  double dice = 0;
  double ot1 = 0;
  double ot2 = 0;
  std::optional<double> chamfer_mm;  // empty when undefined (empty point set)
  bool geometry_warning = false;
};

// Sweeping-threshold overlap: fraction of points of either set that have a
// counterpart within d (inclusive). Empty-vs-empty is 1, one-sided empty 0.
double ot_overlap(const PointSet& target, const PointSet& pred, double d_mm);

// Symmetric mean nearest-neighbor Euclidean distance in mm.
double chamfer_l2(const PointSet& a, const PointSet& b);

// Voxelwise Dice on aligned grids (independent of the point-set path).
double dice_binary(const std::vector<double>& a, const std::vector<double>& b);

// Rigid registration result: rotation (Euler XYZ, degrees) about the
// centroid-free origin plus a translation. 2D uses angle_z and (x, y).
struct RigidFit {
  std::array<double, 3> rot_deg{0, 0, 0};
  std::array<double, 3> trans_mm{0, 0, 0};
  double chamfer = 0;

  std::array<double, 3> apply(const std::array<double, 3>& p, int dims) const;
};

struct RegistrationOptions {
  double rot_span_deg = 30.0;   // coarse grid covers +/- span
  double rot_step_deg = 5.0;
  int nelder_mead_iters = 200;
  std::size_t coarse_subsample = 256;  // moving points used during the sweep
};

// Minimizes chamfer_l2(T(moving), fixed) by a coarse rotation sweep with
// centroid alignment, refined by Nelder-Mead. The identity is always a
// candidate, so the result never scores worse than no registration.
RigidFit rigid_register(const PointSet& moving, const PointSet& fixed, int dims,
                        const RegistrationOptions& options = {});

PointSet apply_fit(const PointSet& ps, const RigidFit& fit, int dims);

// 3D protocol: binarize the reconstruction at 0.5, register ground truth
// onto it, report Ot(1), Ot(2), Dice and Chamfer.
MetricReport evaluate_3d(const VoxelGrid& ground_truth, const VoxelGrid& reconstruction);

struct ReprojectionOptions {
  double plane1_dice_floor = 0.05;  // below this the report carries a warning
};

// Reprojection protocol: plane 1 is Dice without registration; later
// planes register the reference onto the reprojection first and report
// Ot(1), Ot(2), Chamfer in detector mm.
std::vector<MetricReport> evaluate_reprojection(const VoxelGrid& reconstruction,
                                                const std::vector<DetectorImage>& reference_projections,
                                                const std::vector<ProjectionGeometry>& geometries,
                                                const ReprojectionOptions& options = {});

// CSV emission: header sample_id,plane,dice,ot1,ot2,chamfer_mm then one row
// per report plus mean/std aggregate rows.
std::string metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace angio
