#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "angio/geometry.hpp"
#include "angio/pipeline.hpp"
#include "angio/volume_io.hpp"

using namespace angio;

namespace {

ProjectionGeometry test_geometry(std::int64_t nu, double primary_deg = 0, double secondary_deg = 0) {
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

// Analytic ray-box intersection length (slab method).
double ray_box_length(const Vec3& origin, const Vec3& dir, const std::array<double, 3>& half) {
  double t0 = 0, t1 = std::numeric_limits<double>::infinity();
  const double o[3] = {origin.x, origin.y, origin.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0) {
      if (std::abs(o[k]) > half[static_cast<std::size_t>(k)]) return 0;
      continue;
    }
    double ta = (-half[static_cast<std::size_t>(k)] - o[k]) / d[k];
    double tb = (half[static_cast<std::size_t>(k)] - o[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return std::max(0.0, t1 - t0);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

TEST_CASE("all-zero volume projects to an all-zero image") {
  VoxelGrid v = VoxelGrid::zeros({16, 16, 16}, {96, 96, 96});
  const DetectorImage img = forward_project(v, test_geometry(32));
  for (const double p : img.values) CHECK(p == 0.0);
}

TEST_CASE("central unit voxel projects near the detector center") {
  VoxelGrid v = VoxelGrid::zeros({17, 17, 17}, {96, 96, 96});
  v.at(8, 8, 8) = 1.0;
  const auto geom = test_geometry(33);
  const DetectorImage img = forward_project(v, geom);
  std::int64_t best_u = -1, best_v = -1;
  double best = -1;
  for (std::int64_t iv = 0; iv < img.dims[1]; ++iv)
    for (std::int64_t iu = 0; iu < img.dims[0]; ++iu) {
      if (img.at(iu, iv) > best) {
        best = img.at(iu, iv);
        best_u = iu;
        best_v = iv;
      }
    }
  CHECK(best > 0);
  CHECK(std::abs(static_cast<double>(best_u) - 16.0) <= 1.0);
  CHECK(std::abs(static_cast<double>(best_v) - 16.0) <= 1.0);
}

TEST_CASE("uniform cube: central pixel equals the analytic chord length within 1%") {
  const std::array<std::int64_t, 3> dims{64, 64, 64};
  VoxelGrid v = VoxelGrid::zeros(dims, {96, 96, 96});
  for (auto& x : v.values) x = 1.0;
  const auto geom = test_geometry(64);
  const DetectorImage img = forward_project(v, geom);

  const std::int64_t cu = geom.detector_dims[0] / 2;
  const std::int64_t cv = geom.detector_dims[1] / 2;
  const Vec3 src = geom.source_position();
  const Vec3 pix = geom.pixel_center(cu, cv);
  const Vec3 dir = (pix - src).normalized();
  const double expect = ray_box_length(src, dir, {48, 48, 48});
  REQUIRE(expect > 0);
  CHECK(img.at(cu, cv) == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("zero image backprojects to a zero volume") {
  const auto geom = test_geometry(16);
  DetectorImage img = DetectorImage::zeros(geom.detector_dims, geom.detector_spacing_mm);
  const VoxelGrid v = back_project(img, geom, {8, 8, 8}, {96, 96, 96});
  for (const double x : v.values) CHECK(x == 0.0);
}

TEST_CASE("single-pixel backprojection has support only inside the ray tube") {
  const auto geom = test_geometry(16, 25.0, -5.0);
  DetectorImage img = DetectorImage::zeros(geom.detector_dims, geom.detector_spacing_mm);
  img.at(5, 9) = 1.0;
  const std::array<std::int64_t, 3> dims{16, 16, 16};
  const std::array<double, 3> extent{96, 96, 96};
  const VoxelGrid v = back_project(img, geom, dims, extent);

  const Vec3 src = geom.source_position();
  const Vec3 pix = geom.pixel_center(5, 9);
  const Vec3 dir = (pix - src).normalized();
  const auto sp = v.spacing_mm();
  // Interpolation spreads each on-ray sample to its cell corners, so the
  // support tube has the radius of one voxel diagonal.
  const double tube = std::sqrt(sp[0] * sp[0] + sp[1] * sp[1] + sp[2] * sp[2]) + 1e-9;
  bool any_nonzero = false;
  for (std::int64_t iz = 0; iz < dims[2]; ++iz)
    for (std::int64_t iy = 0; iy < dims[1]; ++iy)
      for (std::int64_t ix = 0; ix < dims[0]; ++ix) {
        const double val = v.at(ix, iy, iz);
        if (val == 0.0) continue;
        any_nonzero = true;
        const Vec3 p = v.voxel_center(ix, iy, iz);
        const Vec3 rel = p - src;
        const double along = rel.dot(dir);
        const Vec3 closest = src + dir * along;
        const double dist = (p - closest).norm();
        CHECK(dist <= tube);
      }
  CHECK(any_nonzero);
}

TEST_CASE("dense 8^3/8^2 operator matrix equals its assembled transpose bit-for-bit") {
  const auto geom = test_geometry(8, 30.0, 4.0);
  const std::array<std::int64_t, 3> dims{8, 8, 8};
  const std::array<double, 3> extent{96, 96, 96};
  const std::int64_t nvox = 512, npix = 64;

  // A column v: forward projection of the v-th basis volume.
  std::vector<std::vector<double>> a_cols;
  for (std::int64_t v = 0; v < nvox; ++v) {
    VoxelGrid basis = VoxelGrid::zeros(dims, extent);
    basis.values[static_cast<std::size_t>(v)] = 1.0;
    a_cols.push_back(forward_project(basis, geom).values);
  }
  // Adjoint row p: backprojection of the p-th basis image.
  for (std::int64_t p = 0; p < npix; ++p) {
    DetectorImage basis = DetectorImage::zeros(geom.detector_dims, geom.detector_spacing_mm);
    basis.values[static_cast<std::size_t>(p)] = 1.0;
    const VoxelGrid row = back_project(basis, geom, dims, extent);
    for (std::int64_t v = 0; v < nvox; ++v) {
      // Identical arithmetic on both paths: exact equality required.
      CHECK(row.values[static_cast<std::size_t>(v)] ==
            a_cols[static_cast<std::size_t>(v)][static_cast<std::size_t>(p)]);
    }
  }
}

TEST_CASE("adjoint identity <Ax,y> == <x,A'y> on random 16^3/16^2 pairs") {
  Rng rng(99);
  const auto geom = test_geometry(16, 20.0, -6.0);
  const std::array<std::int64_t, 3> dims{16, 16, 16};
  const std::array<double, 3> extent{100, 100, 100};
  for (int trial = 0; trial < 3; ++trial) {
    VoxelGrid x = VoxelGrid::zeros(dims, extent);
    for (auto& v : x.values) v = rng.uniform(0, 1);
    DetectorImage y = DetectorImage::zeros(geom.detector_dims, geom.detector_spacing_mm);
    for (auto& v : y.values) v = rng.uniform(0, 1);

    const DetectorImage ax = forward_project(x, geom);
    const VoxelGrid aty = back_project(y, geom, dims, extent);
    const double lhs = dot(ax.values, y.values);
    const double rhs = dot(x.values, aty.values);
    const double defect = std::abs(lhs - rhs) / (norm(ax.values) * norm(y.values));
    CHECK(defect < 1e-4);
  }
}

TEST_CASE("projection is linear in the volume") {
  Rng rng(7);
  const auto geom = test_geometry(16);
  const std::array<std::int64_t, 3> dims{12, 12, 12};
  const std::array<double, 3> extent{96, 96, 96};
  VoxelGrid v1 = VoxelGrid::zeros(dims, extent);
  VoxelGrid v2 = VoxelGrid::zeros(dims, extent);
  for (auto& v : v1.values) v = rng.uniform(0, 1);
  for (auto& v : v2.values) v = rng.uniform(0, 1);
  const double a = 2.25, b = -0.75;
  VoxelGrid mix = VoxelGrid::zeros(dims, extent);
  for (std::size_t i = 0; i < mix.values.size(); ++i) mix.values[i] = a * v1.values[i] + b * v2.values[i];

  const auto p1 = forward_project(v1, geom);
  const auto p2 = forward_project(v2, geom);
  const auto pm = forward_project(mix, geom);
  for (std::size_t i = 0; i < pm.values.size(); ++i) {
    const double expect = a * p1.values[i] + b * p2.values[i];
    CHECK(std::abs(pm.values[i] - expect) <= 1e-6 * std::max(1.0, std::abs(expect)));
  }
}

TEST_CASE("identity transform with nearest interpolation is bit-identical") {
  Rng rng(3);
  VoxelGrid v = VoxelGrid::zeros({9, 10, 11}, {90, 95, 100});
  for (auto& x : v.values) x = rng.uniform(0, 1);
  const VoxelGrid out = apply_rigid_transform(v, RigidTransform{}, Interpolation::kNearest);
  for (std::size_t i = 0; i < v.values.size(); ++i) CHECK(out.values[i] == v.values[i]);
}

TEST_CASE("full-turn rotation with trilinear interpolation returns the input") {
  Rng rng(5);
  VoxelGrid v = VoxelGrid::zeros({16, 16, 16}, {96, 96, 96});
  for (auto& x : v.values) x = rng.uniform() < 0.1 ? 1.0 : 0.0;
  RigidTransform t;
  t.rot_primary_deg = 360.0;
  const VoxelGrid out_p = apply_rigid_transform(v, t, Interpolation::kTrilinear);
  RigidTransform t2;
  t2.rot_secondary_deg = 360.0;
  const VoxelGrid out_s = apply_rigid_transform(v, t2, Interpolation::kTrilinear);
  double diff_p = 0, diff_s = 0;
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    diff_p += std::abs(out_p.values[i] - v.values[i]);
    diff_s += std::abs(out_s.values[i] - v.values[i]);
  }
  CHECK(diff_p / static_cast<double>(v.numel()) < 1e-6);
  CHECK(diff_s / static_cast<double>(v.numel()) < 1e-6);
}

TEST_CASE("transform composed with its analytic inverse is the identity on points") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    RigidTransform t;
    t.rot_primary_deg = rng.uniform(-10, 10);
    t.rot_secondary_deg = rng.uniform(-10, 10);
    t.tx_mm = rng.uniform(-8, 8);
    t.ty_mm = rng.uniform(-8, 8);
    const Vec3 p{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
    const Vec3 q = t.apply_inverse(t.apply(p));
    CHECK(std::abs(q.x - p.x) < 1e-9);
    CHECK(std::abs(q.y - p.y) < 1e-9);
    CHECK(std::abs(q.z - p.z) < 1e-9);
  }
}

TEST_CASE("round-trip resampling keeps Dice >= 0.95 at 32^3") {
  Rng rng(23);
  PhantomParams params;
  VoxelGrid v = generate_phantom(rng, {32, 32, 32}, {96, 96, 96}, params);

  Rng motion_rng(29);
  RigidTransform t = sample_motion(motion_rng);
  const VoxelGrid moved = apply_rigid_transform(v, t, Interpolation::kTrilinear);
  const VoxelGrid back = binarize(apply_rigid_transform(moved, t, Interpolation::kTrilinear, /*invert=*/true), 0.5);

  std::int64_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    const bool a = v.values[i] != 0, b = back.values[i] != 0;
    inter += a && b;
    na += a;
    nb += b;
  }
  const double dice = 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
  CHECK(dice >= 0.95);
}

TEST_CASE("sampled acquisition parameters stay inside the protocol ranges") {
  const AcquisitionRanges ranges;  // production defaults
  Rng rng(123);
  double seen_min_p1 = 1e9, seen_max_p1 = -1e9;
  for (int draw = 0; draw < 10000; ++draw) {
    const auto [g1, g2] = sample_acquisition(rng, ranges);
    CHECK(g1.primary_deg >= 18.0);
    CHECK(g1.primary_deg <= 42.0);
    CHECK(g1.secondary_deg >= -8.0);
    CHECK(g1.secondary_deg <= 8.0);
    CHECK(g2.primary_deg >= -8.0);
    CHECK(g2.primary_deg <= 8.0);
    CHECK(g2.secondary_deg >= 18.0);
    CHECK(g2.secondary_deg <= 42.0);
    CHECK(g1.dsd_mm >= 970.0);
    CHECK(g1.dsd_mm <= 1010.0);
    CHECK(g2.dsd_mm >= 1050.0);
    CHECK(g2.dsd_mm <= 1070.0);
    CHECK(g1.dso_mm >= 745.0);
    CHECK(g1.dso_mm <= 785.0);
    CHECK(std::abs(g2.dso_mm - g1.dso_mm) <= 3.0);
    CHECK(g1.detector_spacing_mm[0] >= 0.2769);
    CHECK(g1.detector_spacing_mm[0] <= 0.2789);
    CHECK(g1.detector_spacing_mm == g2.detector_spacing_mm);
    seen_min_p1 = std::min(seen_min_p1, g1.primary_deg);
    seen_max_p1 = std::max(seen_max_p1, g1.primary_deg);
  }
  // Statistical coverage: after 10,000 draws the observed extremes should
  // be within 2% of the range width from the nominal bounds.
  const double width = 42.0 - 18.0;
  CHECK(seen_min_p1 - 18.0 < 0.02 * width);
  CHECK(42.0 - seen_max_p1 < 0.02 * width);
}

TEST_CASE("sampled motion stays inside the protocol ranges and honors test hooks") {
  Rng rng(321);
  for (int draw = 0; draw < 1000; ++draw) {
    const RigidTransform t = sample_motion(rng);
    CHECK(t.rot_primary_deg >= -10.0);
    CHECK(t.rot_primary_deg <= 10.0);
    CHECK(t.rot_secondary_deg >= -10.0);
    CHECK(t.rot_secondary_deg <= 10.0);
    CHECK(t.tx_mm >= -8.0);
    CHECK(t.tx_mm <= 8.0);
    CHECK(t.ty_mm >= -8.0);
    CHECK(t.ty_mm <= 8.0);
  }

  MotionRanges degenerate;
  degenerate.rot_deg[0] = degenerate.rot_deg[1] = 0.0;
  degenerate.trans_mm[0] = degenerate.trans_mm[1] = 0.0;
  Rng rng2(5);
  const RigidTransform t = sample_motion(rng2, degenerate);
  CHECK(t.is_identity());

  Rng a(77), b(77);
  const RigidTransform ta = sample_motion(a);
  const RigidTransform tb = sample_motion(b);
  CHECK(ta.rot_primary_deg == tb.rot_primary_deg);
  CHECK(ta.tx_mm == tb.tx_mm);
}

TEST_CASE("degenerate geometry is rejected") {
  ProjectionGeometry g = test_geometry(16);
  g.dsd_mm = g.dso_mm - 1.0;
  VoxelGrid v = VoxelGrid::zeros({8, 8, 8}, {96, 96, 96});
  CHECK_THROWS_AS(forward_project(v, g), std::invalid_argument);
}

TEST_CASE("volume and detector files round-trip through the raw format") {
  Rng rng(61);
  VoxelGrid v = VoxelGrid::zeros({6, 7, 8}, {90, 92, 94});
  for (auto& x : v.values) x = rng.uniform() < 0.5 ? 0.0 : 1.0;
  const auto dir = std::filesystem::temp_directory_path() / "angio_io_test";
  std::filesystem::create_directories(dir);

  write_volume((dir / "vol").string(), v);
  const VoxelGrid v2 = read_volume((dir / "vol").string());
  CHECK(v2.dims == v.dims);
  CHECK(v2.extent_mm == v.extent_mm);
  CHECK(v2.values == v.values);  // binary values survive f32 exactly

  write_volume((dir / "vol64").string(), v, Dtype::kF64);
  CHECK(read_volume((dir / "vol64").string()).values == v.values);

  DetectorImage img = DetectorImage::zeros({5, 4}, {1.5, 1.5});
  for (auto& x : img.values) x = rng.uniform(0, 3);
  write_detector_image((dir / "img").string(), img, Dtype::kF64);
  const DetectorImage img2 = read_detector_image((dir / "img").string());
  CHECK(img2.dims == img.dims);
  CHECK(img2.values == img.values);

  write_pgm16((dir / "img.pgm").string(), img);
  CHECK(std::filesystem::file_size(dir / "img.pgm") > 0);
  std::filesystem::remove_all(dir);
}
