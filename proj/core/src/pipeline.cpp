#include "angio/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace angio {

void binarize_inplace(std::vector<double>& values, double threshold) {
  if (!std::isfinite(threshold)) throw std::invalid_argument("binarize: threshold must be finite");
  for (auto& v : values) v = v > threshold ? 1.0 : 0.0;
}

VoxelGrid binarize(const VoxelGrid& volume, double threshold) {
  VoxelGrid out = volume;
  binarize_inplace(out.values, threshold);
  return out;
}

DetectorImage binarize(const DetectorImage& image, double threshold) {
  DetectorImage out = image;
  binarize_inplace(out.values, threshold);
  return out;
}

std::pair<DetectorImage, DetectorImage> simulate_pair(const VoxelGrid& phantom, const ProjectionGeometry& geom1,
                                                      const ProjectionGeometry& geom2, const RigidTransform& motion) {
  DetectorImage proj1 = binarize(forward_project(phantom, geom1), 0.0);
  DetectorImage proj2;
  if (motion.is_identity()) {
    proj2 = binarize(forward_project(phantom, geom2), 0.0);
  } else {
    const VoxelGrid moved = apply_rigid_transform(phantom, motion, Interpolation::kTrilinear);
    proj2 = binarize(forward_project(moved, geom2), 0.0);
  }
  return {std::move(proj1), std::move(proj2)};
}

VoxelGrid build_model_input(const DetectorImage& proj1, const DetectorImage& proj2, const ProjectionGeometry& geom1,
                            const ProjectionGeometry& geom2, std::array<std::int64_t, 3> target_dims,
                            std::array<double, 3> target_extent) {
  VoxelGrid mask1 = binarize(back_project(proj1, geom1, target_dims, target_extent), 0.0);
  const VoxelGrid mask2 = binarize(back_project(proj2, geom2, target_dims, target_extent), 0.0);
  for (std::size_t i = 0; i < mask1.values.size(); ++i) mask1.values[i] += mask2.values[i];
  return mask1;
}

std::vector<std::int64_t> split_sizes(std::int64_t n, const std::array<double, 3>& fractions) {
  std::array<double, 3> exact{};
  std::array<std::int64_t, 3> sizes{};
  std::int64_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    exact[static_cast<std::size_t>(k)] = fractions[static_cast<std::size_t>(k)] * static_cast<double>(n);
    sizes[static_cast<std::size_t>(k)] = static_cast<std::int64_t>(std::floor(exact[static_cast<std::size_t>(k)]));
    assigned += sizes[static_cast<std::size_t>(k)];
  }
  // Largest remainder; ties resolved by split order (train, val, test).
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ra = exact[static_cast<std::size_t>(a)] - std::floor(exact[static_cast<std::size_t>(a)]);
    const double rb = exact[static_cast<std::size_t>(b)] - std::floor(exact[static_cast<std::size_t>(b)]);
    return ra > rb;
  });
  const std::int64_t leftover = n - assigned;
  for (std::int64_t j = 0; j < leftover; ++j) {
    sizes[static_cast<std::size_t>(order[static_cast<std::size_t>(j % 3)])] += 1;
  }
  return {sizes[0], sizes[1], sizes[2]};
}

TrainingSample make_sample(std::uint64_t seed, std::int64_t sample_id, const DatasetParams& params) {
  TrainingSample s;
  s.sample_id = sample_id;
  s.seed = seed;

  Rng rng_phantom(derive_seed(seed, "phantom"));
  Rng rng_geom(derive_seed(seed, "acquisition"));
  Rng rng_motion(derive_seed(seed, "motion"));

  const double extent = rng_phantom.uniform(params.volume_extent_mm[0], params.volume_extent_mm[1]);
  const std::array<double, 3> extent_mm{extent, extent, extent};
  s.ground_truth = generate_phantom(rng_phantom, params.volume_dims, extent_mm, params.phantom);

  auto [g1, g2] = sample_acquisition(rng_geom, params.acquisition);
  s.geom1 = g1;
  s.geom2 = g2;

  s.motion = params.zero_motion ? RigidTransform{} : sample_motion(rng_motion, params.motion);

  auto [p1, p2] = simulate_pair(s.ground_truth, s.geom1, s.geom2, s.motion);
  s.proj1 = std::move(p1);
  s.proj2 = std::move(p2);
  s.input = build_model_input(s.proj1, s.proj2, s.geom1, s.geom2, params.volume_dims, extent_mm);
  return s;
}

Dataset make_dataset(std::uint64_t master_seed, const DatasetParams& params) {
  if (params.count < 10) throw std::invalid_argument("make_dataset: need at least 10 samples");
  const auto sizes = split_sizes(params.count, params.split);
  Dataset ds;
  std::int64_t id = 0;
  for (int part = 0; part < 3; ++part) {
    auto& bucket = part == 0 ? ds.train : (part == 1 ? ds.val : ds.test);
    bucket.reserve(static_cast<std::size_t>(sizes[static_cast<std::size_t>(part)]));
    for (std::int64_t k = 0; k < sizes[static_cast<std::size_t>(part)]; ++k, ++id) {
      bucket.push_back(make_sample(derive_seed(master_seed, "sample", static_cast<std::uint64_t>(id)), id, params));
    }
  }
  return ds;
}

}  // namespace angio
