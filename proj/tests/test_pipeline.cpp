#include "doctest.h"

#include <cmath>
#include <set>
#include <stdexcept>

#include "angio/phantom.hpp"
#include "angio/pipeline.hpp"

using namespace angio;

namespace {

ProjectionGeometry flat_geometry(std::int64_t nu, double primary_deg = 0, double secondary_deg = 0) {
  ProjectionGeometry g;
  g.dsd_mm = 990.0;
  g.dso_mm = 765.0;
  g.primary_deg = primary_deg;
  g.secondary_deg = secondary_deg;
  g.detector_dims = {nu, nu};
  const double scale = 512.0 / static_cast<double>(nu);
  g.detector_spacing_mm = {0.2779 * scale, 0.2779 * scale};
  return g;
}

// Projection of a world point onto detector pixel coordinates.
std::array<double, 2> project_point(const ProjectionGeometry& g, const Vec3& p) {
  const Vec3 src = g.source_position();
  const Vec3 center = g.detector_center();
  const Vec3 u = g.detector_u_axis();
  const Vec3 v = g.detector_v_axis();
  const Vec3 n = (center - src).normalized();
  const double t = (center - src).dot(n) / (p - src).dot(n);
  const Vec3 hit = src + (p - src) * t;
  const double du =
      (hit - center).dot(u) / g.detector_spacing_mm[0] + static_cast<double>(g.detector_dims[0]) / 2.0 - 0.5;
  const double dv =
      (hit - center).dot(v) / g.detector_spacing_mm[1] + static_cast<double>(g.detector_dims[1]) / 2.0 - 0.5;
  return {du, dv};
}

}  // namespace

TEST_CASE("binarize is strictly greater-than at both protocol thresholds") {
  std::vector<double> v{1e-6, 0.0, -0.5};
  binarize_inplace(v, 0.0);
  CHECK(v == std::vector<double>{1, 0, 0});

  std::vector<double> w{0.4999, 0.5, 0.5001};
  binarize_inplace(w, 0.5);
  CHECK(w == std::vector<double>{0, 0, 1});

  std::vector<double> zeros(8, 0.0);
  binarize_inplace(zeros, 0.0);
  for (const double x : zeros) CHECK(x == 0.0);
  std::vector<double> zeros2(8, 0.0);
  binarize_inplace(zeros2, 3.0);
  for (const double x : zeros2) CHECK(x == 0.0);
}

TEST_CASE("identical geometry and identity motion give identical projections") {
  Rng rng(41);
  const VoxelGrid phantom = generate_phantom(rng, {16, 16, 16}, {96, 96, 96}, {});
  const auto geom = flat_geometry(32, 22, -3);
  const auto [p1, p2] = simulate_pair(phantom, geom, geom, RigidTransform{});
  CHECK(p1.values == p2.values);
}

TEST_CASE("empty phantom gives empty projections") {
  const VoxelGrid phantom = VoxelGrid::zeros({16, 16, 16}, {96, 96, 96});
  const auto [p1, p2] = simulate_pair(phantom, flat_geometry(32), flat_geometry(32, 30), RigidTransform{});
  for (const double v : p1.values) CHECK(v == 0.0);
  for (const double v : p2.values) CHECK(v == 0.0);
}

TEST_CASE("translation shifts the projection by the magnification factor") {
  // Single voxel at the isocenter; 8 mm horizontal translation.
  VoxelGrid phantom = VoxelGrid::zeros({33, 33, 33}, {96, 96, 96});
  phantom.at(16, 16, 16) = 1.0;
  const auto geom = flat_geometry(64);
  RigidTransform motion;
  motion.tx_mm = 8.0;
  const auto [p1, p2] = simulate_pair(phantom, geom, geom, motion);

  auto centroid_u = [](const DetectorImage& img) {
    double num = 0, den = 0;
    for (std::int64_t iv = 0; iv < img.dims[1]; ++iv)
      for (std::int64_t iu = 0; iu < img.dims[0]; ++iu) {
        num += img.at(iu, iv) * static_cast<double>(iu);
        den += img.at(iu, iv);
      }
    REQUIRE(den > 0);
    return num / den;
  };
  const double shift_px = centroid_u(p2) - centroid_u(p1);
  const double expect_px = 8.0 * (geom.dsd_mm / geom.dso_mm) / geom.detector_spacing_mm[0];
  CHECK(std::abs(shift_px - expect_px) <= 1.5);
}

TEST_CASE("model input is the sum of the two thresholded backprojections") {
  Rng rng(43);
  const VoxelGrid phantom = generate_phantom(rng, {16, 16, 16}, {96, 96, 96}, {});
  const auto geom1 = flat_geometry(32, 30, 0);
  const auto geom2 = flat_geometry(32, 0, 30);
  Rng motion_rng(44);
  const RigidTransform motion = sample_motion(motion_rng);
  const auto [p1, p2] = simulate_pair(phantom, geom1, geom2, motion);
  const VoxelGrid input = build_model_input(p1, p2, geom1, geom2, phantom.dims, phantom.extent_mm);

  // Independent recomputation of the two masks.
  const VoxelGrid mask1 = binarize(back_project(p1, geom1, phantom.dims, phantom.extent_mm), 0.0);
  const VoxelGrid mask2 = binarize(back_project(p2, geom2, phantom.dims, phantom.extent_mm), 0.0);
  for (std::size_t i = 0; i < input.values.size(); ++i) {
    const double v = input.values[i];
    CHECK((v == 0.0 || v == 1.0 || v == 2.0));
    const bool both = mask1.values[i] == 1.0 && mask2.values[i] == 1.0;
    CHECK((v == 2.0) == both);
  }
}

TEST_CASE("empty projections build a zero model input") {
  const auto geom = flat_geometry(16);
  DetectorImage empty = DetectorImage::zeros(geom.detector_dims, geom.detector_spacing_mm);
  const VoxelGrid input = build_model_input(empty, empty, geom, flat_geometry(16, 30), {8, 8, 8}, {96, 96, 96});
  for (const double v : input.values) CHECK(v == 0.0);
}

TEST_CASE("identical geometry and projections give values in {0,2}") {
  Rng rng(47);
  const VoxelGrid phantom = generate_phantom(rng, {16, 16, 16}, {96, 96, 96}, {});
  const auto geom = flat_geometry(32, 25, 2);
  const auto [p1, p2] = simulate_pair(phantom, geom, geom, RigidTransform{});
  const VoxelGrid input = build_model_input(p1, p2, geom, geom, phantom.dims, phantom.extent_mm);
  for (const double v : input.values) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("phantoms are a single 26-connected component across seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const VoxelGrid v = generate_phantom(rng, {32, 32, 32}, {96, 96, 96}, {});
    const auto [largest, total] = largest_component_26(v);
    REQUIRE(total > 0);
    CHECK(largest == total);
  }
}

TEST_CASE("phantom foreground fraction stays inside the frozen band at 32^3") {
  for (std::uint64_t seed = 1000; seed < 1300; ++seed) {
    Rng rng(seed);
    const VoxelGrid v = generate_phantom(rng, {32, 32, 32}, {96, 96, 96}, {});
    const auto [largest, total] = largest_component_26(v);
    (void)largest;
    const double fraction = static_cast<double>(total) / static_cast<double>(v.numel());
    CHECK(fraction >= 0.001);
    CHECK(fraction <= 0.05);
  }
}

TEST_CASE("phantom generation is deterministic under the seed") {
  Rng a(1234), b(1234);
  const VoxelGrid va = generate_phantom(a, {32, 32, 32}, {96, 96, 96}, {});
  const VoxelGrid vb = generate_phantom(b, {32, 32, 32}, {96, 96, 96}, {});
  CHECK(va.values == vb.values);
}

TEST_CASE("phantom parameters that cannot fit the grid are rejected") {
  PhantomParams params;
  params.trunk_radius_vox[0] = 12.0;
  params.trunk_radius_vox[1] = 14.0;
  Rng rng(1);
  CHECK_THROWS_AS(generate_phantom(rng, {16, 16, 16}, {96, 96, 96}, params), std::invalid_argument);
}

TEST_CASE("largest-remainder split sizes") {
  CHECK(split_sizes(20, {0.75, 0.15, 0.10}) == std::vector<std::int64_t>{15, 3, 2});
  CHECK(split_sizes(11, {0.75, 0.15, 0.10}) == std::vector<std::int64_t>{8, 2, 1});
  CHECK(split_sizes(10, {0.75, 0.15, 0.10}) == std::vector<std::int64_t>{8, 1, 1});
  for (std::int64_t n : {10, 13, 17, 20, 50, 101}) {
    const auto s = split_sizes(n, {0.75, 0.15, 0.10});
    CHECK(s[0] + s[1] + s[2] == n);
  }
}

TEST_CASE("datasets split disjointly, consistently and deterministically") {
  DatasetParams params;
  params.count = 20;
  params.volume_dims = {16, 16, 16};
  const Dataset ds = make_dataset(777, params);
  CHECK(ds.train.size() == 15);
  CHECK(ds.val.size() == 3);
  CHECK(ds.test.size() == 2);

  std::set<std::int64_t> ids;
  auto sweep = [&](const std::vector<TrainingSample>& part) {
    for (const auto& s : part) {
      CHECK(!ids.count(s.sample_id));
      ids.insert(s.sample_id);
      for (const double v : s.input.values) CHECK((v == 0.0 || v == 1.0 || v == 2.0));
      CHECK(s.input.dims == s.ground_truth.dims);
      CHECK(s.input.extent_mm == s.ground_truth.extent_mm);
    }
  };
  sweep(ds.train);
  sweep(ds.val);
  sweep(ds.test);
  CHECK(ids.size() == 20);

  const Dataset ds2 = make_dataset(777, params);
  CHECK(ds2.train[0].input.values == ds.train[0].input.values);
  CHECK(ds2.test[1].proj2.values == ds.test[1].proj2.values);
  CHECK(ds2.train[3].motion.tx_mm == ds.train[3].motion.tx_mm);
}

TEST_CASE("reprojection of the ground truth reproduces proj1 exactly") {
  DatasetParams params;
  params.count = 10;
  params.volume_dims = {16, 16, 16};
  const Dataset ds = make_dataset(31337, params);
  auto check_sample = [](const TrainingSample& s) {
    const DetectorImage re = binarize(forward_project(s.ground_truth, s.geom1), 0.0);
    CHECK(re.values == s.proj1.values);
  };
  for (const auto& s : ds.train) check_sample(s);
  for (const auto& s : ds.val) check_sample(s);
  for (const auto& s : ds.test) check_sample(s);
}

TEST_CASE("visual hull covers the phantom under zero motion, up to one voxel") {
  DatasetParams params;
  params.count = 10;
  params.volume_dims = {24, 24, 24};
  params.zero_motion = true;
  const Dataset ds = make_dataset(2025, params);
  const TrainingSample& s = ds.train.front();

  // Margin-1 dilation of the value-2 region.
  const auto& d = s.input.dims;
  auto hull_near = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const std::int64_t nx = x + dx, ny = y + dy, nz = z + dz;
          if (nx < 0 || nx >= d[0] || ny < 0 || ny >= d[1] || nz < 0 || nz >= d[2]) continue;
          if (s.input.at(nx, ny, nz) == 2.0) return true;
        }
    return false;
  };

  for (std::int64_t iz = 0; iz < d[2]; ++iz)
    for (std::int64_t iy = 0; iy < d[1]; ++iy)
      for (std::int64_t ix = 0; ix < d[0]; ++ix) {
        if (s.ground_truth.at(ix, iy, iz) == 0.0) continue;
        const Vec3 p = s.ground_truth.voxel_center(ix, iy, iz);
        const auto [u1, v1] = project_point(s.geom1, p);
        const auto [u2, v2] = project_point(s.geom2, p);
        const bool inside1 = u1 >= 1 && u1 <= static_cast<double>(s.geom1.detector_dims[0]) - 2 && v1 >= 1 &&
                             v1 <= static_cast<double>(s.geom1.detector_dims[1]) - 2;
        const bool inside2 = u2 >= 1 && u2 <= static_cast<double>(s.geom2.detector_dims[0]) - 2 && v2 >= 1 &&
                             v2 <= static_cast<double>(s.geom2.detector_dims[1]) - 2;
        if (!inside1 || !inside2) continue;
        CHECK(hull_near(ix, iy, iz));
      }
}
