#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "angio/metrics.hpp"
#include "angio/phantom.hpp"
#include "angio/pipeline.hpp"
#include "angio/rng.hpp"

using namespace angio;

namespace {

PointSet random_points(Rng& rng, std::size_t n, int dims, double span = 40.0) {
  PointSet ps;
  ps.dims = dims;
  for (std::size_t i = 0; i < n; ++i) {
    ps.points.push_back({rng.uniform(-span, span), rng.uniform(-span, span),
                         dims == 3 ? rng.uniform(-span, span) : 0.0});
  }
  return ps;
}

// Exhaustive O(N*M) oracles.
double ot_bruteforce(const PointSet& target, const PointSet& pred, double d) {
  if (target.empty() && pred.empty()) return 1.0;
  if (target.empty() || pred.empty()) return 0.0;
  const double d2 = d * d;
  auto sq = [&](const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0;
    for (int k = 0; k < target.dims; ++k) {
      const double dd = a[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)];
      s += dd * dd;
    }
    return s;
  };
  std::int64_t tpr = 0, tpm = 0;
  for (const auto& p : target.points) {
    for (const auto& u : pred.points) {
      if (sq(p, u) <= d2) {
        ++tpr;
        break;
      }
    }
  }
  for (const auto& u : pred.points) {
    for (const auto& p : target.points) {
      if (sq(u, p) <= d2) {
        ++tpm;
        break;
      }
    }
  }
  return static_cast<double>(tpm + tpr) / static_cast<double>(target.size() + pred.size());
}

double chamfer_bruteforce(const PointSet& a, const PointSet& b) {
  auto dist = [&](const std::array<double, 3>& p, const std::array<double, 3>& q) {
    double s = 0;
    for (int k = 0; k < a.dims; ++k) {
      const double dd = p[static_cast<std::size_t>(k)] - q[static_cast<std::size_t>(k)];
      s += dd * dd;
    }
    return std::sqrt(s);
  };
  double sum_ab = 0;
  for (const auto& p : a.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b.points) best = std::min(best, dist(p, q));
    sum_ab += best;
  }
  double sum_ba = 0;
  for (const auto& q : b.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : a.points) best = std::min(best, dist(q, p));
    sum_ba += best;
  }
  return 0.5 * (sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size()));
}

}  // namespace

TEST_CASE("overlap of identical nonempty sets is 1 at any threshold") {
  Rng rng(1);
  const PointSet ps = random_points(rng, 50, 3);
  for (const double d : {0.0, 0.5, 1.0, 2.0}) CHECK(ot_overlap(ps, ps, d) == 1.0);
}

TEST_CASE("overlap hand case: one target, two predictions, one远 outlier") {
  PointSet target;
  target.dims = 3;
  target.points.push_back({0, 0, 0});
  PointSet pred;
  pred.dims = 3;
  pred.points.push_back({0, 0, 0});
  pred.points.push_back({5, 0, 0});
  // TPR = 1, TPM = 1, FN = 0, FP = 1 -> 2/3.
  CHECK(ot_overlap(target, pred, 1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("overlap empty-set semantics") {
  PointSet empty;
  PointSet one;
  one.points.push_back({1, 2, 3});
  CHECK(ot_overlap(empty, empty, 1.0) == 1.0);
  CHECK(ot_overlap(empty, one, 1.0) == 0.0);
  CHECK(ot_overlap(one, empty, 1.0) == 0.0);
}

TEST_CASE("overlap at d=0 on voxel-aligned sets equals an independent Dice") {
  Rng rng(2);
  VoxelGrid a = VoxelGrid::zeros({12, 12, 12}, {60, 60, 60});
  VoxelGrid b = VoxelGrid::zeros({12, 12, 12}, {60, 60, 60});
  for (auto& v : a.values) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
  for (auto& v : b.values) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
  const double dice = dice_binary(a.values, b.values);
  const double ot0 = ot_overlap(pointset_from_volume(a), pointset_from_volume(b), 0.0);
  CHECK(std::abs(dice - ot0) < 1e-12);
}

TEST_CASE("overlap is monotone in the threshold and symmetric in its arguments") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const PointSet a = random_points(rng, 40 + static_cast<std::size_t>(rng.uniform_int(0, 60)), 3);
    const PointSet b = random_points(rng, 40 + static_cast<std::size_t>(rng.uniform_int(0, 60)), 3);
    double prev = -1;
    for (const double d : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
      const double v = ot_overlap(a, b, d);
      CHECK(v >= prev);
      prev = v;
      CHECK(ot_overlap(a, b, d) == ot_overlap(b, a, d));
    }
  }
}

TEST_CASE("overlap matches the exhaustive oracle exactly on random pairs") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int dims = trial % 2 == 0 ? 3 : 2;
    const PointSet a = random_points(rng, 1 + static_cast<std::size_t>(rng.uniform_int(0, 120)), dims);
    const PointSet b = random_points(rng, 1 + static_cast<std::size_t>(rng.uniform_int(0, 120)), dims);
    const double d = rng.uniform(0.0, 15.0);
    CHECK(ot_overlap(a, b, d) == ot_bruteforce(a, b, d));
  }
}

TEST_CASE("chamfer basics") {
  Rng rng(5);
  const PointSet ps = random_points(rng, 30, 3);
  CHECK(chamfer_l2(ps, ps) == 0.0);

  PointSet a, b;
  a.points.push_back({0, 0, 0});
  b.points.push_back({3, 0, 0});
  CHECK(chamfer_l2(a, b) == doctest::Approx(3.0).epsilon(1e-12));

  PointSet empty;
  CHECK_THROWS_AS(chamfer_l2(empty, ps), std::invalid_argument);
  CHECK_THROWS_AS(chamfer_l2(ps, empty), std::invalid_argument);
}

TEST_CASE("chamfer matches the exhaustive oracle on random pairs") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int dims = trial % 2 == 0 ? 3 : 2;
    const PointSet a = random_points(rng, 1 + static_cast<std::size_t>(rng.uniform_int(0, 150)), dims);
    const PointSet b = random_points(rng, 1 + static_cast<std::size_t>(rng.uniform_int(0, 150)), dims);
    CHECK(chamfer_l2(a, b) == doctest::Approx(chamfer_bruteforce(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("registration never scores worse than the identity") {
  Rng rng(7);
  const PointSet fixed = random_points(rng, 150, 3, 25.0);
  PointSet moving = fixed;  // already aligned
  const RigidFit fit = rigid_register(moving, fixed, 3);
  CHECK(fit.chamfer <= chamfer_l2(moving, fixed) + 1e-12);
}

TEST_CASE("registration recovers a known transform on a 200-point set") {
  Rng rng(8);
  PointSet moving = random_points(rng, 200, 3, 30.0);

  RigidFit truth;
  truth.rot_deg = {0, 0, 10.0};
  truth.trans_mm = {4.0, 0.0, 0.0};
  const PointSet fixed = apply_fit(moving, truth, 3);

  const RigidFit fit = rigid_register(moving, fixed, 3);
  // Recovered alignment within half a typical voxel pitch (0.75 mm).
  CHECK(fit.chamfer < 0.5 * 0.75);
}

TEST_CASE("registration is deterministic") {
  Rng rng(9);
  const PointSet moving = random_points(rng, 120, 2, 20.0);
  RigidFit truth;
  truth.rot_deg = {0, 0, -7.0};
  truth.trans_mm = {2.0, -3.0, 0.0};
  const PointSet fixed = apply_fit(moving, truth, 2);

  const RigidFit f1 = rigid_register(moving, fixed, 2);
  const RigidFit f2 = rigid_register(moving, fixed, 2);
  CHECK(f1.chamfer == f2.chamfer);
  CHECK(f1.rot_deg == f2.rot_deg);
  CHECK(f1.trans_mm == f2.trans_mm);
}

TEST_CASE("volumetric evaluation of a perfect reconstruction") {
  Rng rng(10);
  const VoxelGrid gt = generate_phantom(rng, {16, 16, 16}, {48, 48, 48}, {});
  const MetricReport report = evaluate_3d(gt, gt);
  CHECK(report.ot1 == 1.0);
  CHECK(report.ot2 == 1.0);
  REQUIRE(report.chamfer_mm.has_value());
  CHECK(*report.chamfer_mm == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("volumetric evaluation of a one-voxel shift registers back tightly") {
  Rng rng(11);
  const std::array<std::int64_t, 3> dims{32, 32, 32};
  const std::array<double, 3> extent{24, 24, 24};  // 0.75 mm voxels
  VoxelGrid gt = VoxelGrid::zeros(dims, extent);
  Rng phantom_rng(12);
  gt = generate_phantom(phantom_rng, dims, extent, {});

  VoxelGrid shifted = VoxelGrid::zeros(dims, extent);
  for (std::int64_t z = 0; z < dims[2]; ++z)
    for (std::int64_t y = 0; y < dims[1]; ++y)
      for (std::int64_t x = 1; x < dims[0]; ++x) shifted.at(x, y, z) = gt.at(x - 1, y, z);

  // Pre-registration: a 0.75 mm shift keeps every point within 2 mm.
  CHECK(ot_overlap(pointset_from_volume(gt), pointset_from_volume(shifted), 2.0) == 1.0);

  const MetricReport report = evaluate_3d(gt, shifted);
  REQUIRE(report.chamfer_mm.has_value());
  CHECK(*report.chamfer_mm < 0.4);
  CHECK(report.ot2 >= report.ot1);
}

TEST_CASE("volumetric evaluation of an empty prediction reports zeros") {
  Rng rng(13);
  const VoxelGrid gt = generate_phantom(rng, {16, 16, 16}, {48, 48, 48}, {});
  const VoxelGrid empty = VoxelGrid::zeros({16, 16, 16}, {48, 48, 48});
  const MetricReport report = evaluate_3d(gt, empty);
  CHECK(report.ot1 == 0.0);
  CHECK(report.ot2 == 0.0);
  CHECK_FALSE(report.chamfer_mm.has_value());
}

TEST_CASE("reprojection evaluation: perfect reconstruction, zero motion") {
  DatasetParams params;
  params.count = 10;
  params.volume_dims = {16, 16, 16};
  params.zero_motion = true;
  const Dataset ds = make_dataset(99, params);
  const TrainingSample& s = ds.test.front();

  const auto reports = evaluate_reprojection(s.ground_truth, {s.proj1, s.proj2}, {s.geom1, s.geom2});
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].plane == 1);
  CHECK(reports[1].plane == 2);
  CHECK(reports[0].dice == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(reports[0].geometry_warning);
}

TEST_CASE("reprojection evaluation: registration helps on the motion plane") {
  DatasetParams params;
  params.count = 10;
  params.volume_dims = {24, 24, 24};
  const Dataset ds = make_dataset(12345, params);
  const TrainingSample& s = ds.train.front();

  // Reproject the (un-moved) ground truth through plane 2; the reference
  // proj2 saw the moved phantom, so registration must close the gap.
  const VoxelGrid recon = s.ground_truth;
  const DetectorImage reproj = binarize(forward_project(recon, s.geom2), 0.0);
  const PointSet ref_pts = pointset_from_image(s.proj2);
  const PointSet reproj_pts = pointset_from_image(reproj);
  REQUIRE_FALSE(ref_pts.empty());
  REQUIRE_FALSE(reproj_pts.empty());

  const double pre = ot_overlap(ref_pts, reproj_pts, 2.0);
  const auto reports = evaluate_reprojection(recon, {s.proj1, s.proj2}, {s.geom1, s.geom2});
  const double post = reports[1].ot2;
  CHECK(post >= pre);
}

TEST_CASE("report invariant: ot2 >= ot1 >= dice") {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const PointSet a = random_points(rng, 80, 3, 10.0);
    const PointSet b = random_points(rng, 80, 3, 10.0);
    const double dice = ot_overlap(a, b, 0.0);
    const double ot1 = ot_overlap(a, b, 1.0);
    const double ot2 = ot_overlap(a, b, 2.0);
    CHECK(ot2 >= ot1);
    CHECK(ot1 >= dice);
  }
}

TEST_CASE("CSV schema and aggregates") {
  std::vector<std::pair<std::string, MetricReport>> rows;
  MetricReport r1;
  r1.plane = 1;
  r1.dice = 0.8;
  r1.ot1 = 0.9;
  r1.ot2 = 0.95;
  r1.chamfer_mm = 1.5;
  MetricReport r2 = r1;
  r2.plane = 2;
  r2.dice = 0.6;
  r2.ot1 = 0.7;
  r2.ot2 = 0.8;
  r2.chamfer_mm = 2.5;
  rows.emplace_back("s0000", r1);
  rows.emplace_back("s0001", r2);
  const std::string csv = metrics_csv(rows);

  CHECK(csv.rfind("sample_id,plane,dice,ot1,ot2,chamfer_mm\n", 0) == 0);
  CHECK(csv.find("s0000,1,0.8,0.9,0.95,1.5\n") != std::string::npos);
  CHECK(csv.find("mean,,0.7,0.8,0.875,2\n") != std::string::npos);
  // Sample standard deviation of {0.8, 0.6} is 0.1414...
  CHECK(csv.find("std,,0.141421356") != std::string::npos);
}
