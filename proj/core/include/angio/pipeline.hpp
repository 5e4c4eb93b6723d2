#pragma once

#include <cstdint>
#include <vector>

#include "angio/geometry.hpp"
#include "angio/phantom.hpp"
#include "angio/rng.hpp"

namespace angio {

// out = 1 where value > threshold (strictly), else 0.
void binarize_inplace(std::vector<double>& values, double threshold);
VoxelGrid binarize(const VoxelGrid& volume, double threshold);
DetectorImage binarize(const DetectorImage& image, double threshold);

// Plane 1 sees the phantom as-is; plane 2 sees it after the motion
// transform. Both projections are thresholded at zero.
std::pair<DetectorImage, DetectorImage> simulate_pair(const VoxelGrid& phantom, const ProjectionGeometry& geom1,
                                                      const ProjectionGeometry& geom2, const RigidTransform& motion);

// Sum of the two thresholded backprojections; values in {0,1,2} where 2
// marks the two-view visual hull intersection.
VoxelGrid build_model_input(const DetectorImage& proj1, const DetectorImage& proj2, const ProjectionGeometry& geom1,
                            const ProjectionGeometry& geom2, std::array<std::int64_t, 3> target_dims,
                            std::array<double, 3> target_extent);

struct TrainingSample {
  std::int64_t sample_id = 0;
  std::uint64_t seed = 0;
  VoxelGrid input;        // values in {0,1,2}
  VoxelGrid ground_truth; // pre-motion phantom, binary
  DetectorImage proj1;
  DetectorImage proj2;
  ProjectionGeometry geom1;
  ProjectionGeometry geom2;
  RigidTransform motion;
};

struct DatasetParams {
  std::int64_t count = 20;
  std::array<std::int64_t, 3> volume_dims{32, 32, 32};
  // Per-sample cubic extent drawn uniformly from this range.
  double volume_extent_mm[2] = {90.0, 105.0};
  std::array<double, 3> split{0.75, 0.15, 0.10};
  PhantomParams phantom;
  AcquisitionRanges acquisition;
  MotionRanges motion;
  bool zero_motion = false;  // test hook

  DatasetParams() {
    // Desk-scale default: quarter-resolution detector with the pitch
    // scaled up to keep the physical field of view of the full protocol.
    acquisition.detector_dims = {64, 64};
    acquisition.spacing_scale = 8.0;
  }
};

struct Dataset {
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> val;
  std::vector<TrainingSample> test;

  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

TrainingSample make_sample(std::uint64_t seed, std::int64_t sample_id, const DatasetParams& params);

// Split sizes by largest remainder; each sample is generated from its own
// seed derived from the master seed, so datasets are reproducible and
// samples independent.
Dataset make_dataset(std::uint64_t master_seed, const DatasetParams& params);

std::vector<std::int64_t> split_sizes(std::int64_t n, const std::array<double, 3>& fractions);

}  // namespace angio
