#include "angio/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "angio/pipeline.hpp"
#include "hash_grid.hpp"

namespace angio {

PointSet pointset_from_volume(const VoxelGrid& binary) {
  PointSet ps;
  ps.dims = 3;
  const auto sp = binary.spacing_mm();
  for (std::int64_t iz = 0; iz < binary.dims[2]; ++iz)
    for (std::int64_t iy = 0; iy < binary.dims[1]; ++iy)
      for (std::int64_t ix = 0; ix < binary.dims[0]; ++ix) {
        if (binary.at(ix, iy, iz) == 0.0) continue;
        ps.points.push_back({(static_cast<double>(ix) + 0.5) * sp[0] - binary.extent_mm[0] / 2.0,
                             (static_cast<double>(iy) + 0.5) * sp[1] - binary.extent_mm[1] / 2.0,
                             (static_cast<double>(iz) + 0.5) * sp[2] - binary.extent_mm[2] / 2.0});
      }
  return ps;
}

PointSet pointset_from_image(const DetectorImage& binary) {
  PointSet ps;
  ps.dims = 2;
  const double ext_u = static_cast<double>(binary.dims[0]) * binary.spacing_mm[0];
  const double ext_v = static_cast<double>(binary.dims[1]) * binary.spacing_mm[1];
  for (std::int64_t iv = 0; iv < binary.dims[1]; ++iv)
    for (std::int64_t iu = 0; iu < binary.dims[0]; ++iu) {
      if (binary.at(iu, iv) == 0.0) continue;
      ps.points.push_back({(static_cast<double>(iu) + 0.5) * binary.spacing_mm[0] - ext_u / 2.0,
                           (static_cast<double>(iv) + 0.5) * binary.spacing_mm[1] - ext_v / 2.0, 0.0});
    }
  return ps;
}

namespace {

using detail::HashGrid;

// Exact coordinate-identity match used for d == 0.
bool any_equal(const std::vector<std::array<double, 3>>& pts, const std::array<double, 3>& q, int dims) {
  for (const auto& p : pts) {
    bool eq = true;
    for (int k = 0; k < dims; ++k) eq = eq && p[static_cast<std::size_t>(k)] == q[static_cast<std::size_t>(k)];
    if (eq) return true;
  }
  return false;
}

// Largest axis extent of the joint bounding box; the adaptive cell size
// must cover the separation between the sets, not just their individual
// footprints (two distant single points would otherwise degenerate).
double joint_span(const PointSet& a, const PointSet& b) {
  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  auto fold = [&](const PointSet& ps) {
    for (const auto& p : ps.points)
      for (int k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], p[static_cast<std::size_t>(k)]);
        hi[k] = std::max(hi[k], p[static_cast<std::size_t>(k)]);
      }
  };
  fold(a);
  fold(b);
  double s = 0;
  for (int k = 0; k < a.dims; ++k) s = std::max(s, hi[k] - lo[k]);
  return s;
}

}  // namespace

double ot_overlap(const PointSet& target, const PointSet& pred, double d_mm) {
  if (d_mm < 0) throw std::invalid_argument("ot_overlap: threshold must be >= 0");
  if (target.empty() && pred.empty()) return 1.0;
  if (target.empty() || pred.empty()) return 0.0;
  std::int64_t tpr = 0, tpm = 0;
  if (d_mm == 0.0) {
    for (const auto& p : target.points) {
      if (any_equal(pred.points, p, target.dims)) ++tpr;
    }
    for (const auto& u : pred.points) {
      if (any_equal(target.points, u, target.dims)) ++tpm;
    }
  } else {
    HashGrid pred_grid(pred.points, pred.dims, d_mm);
    HashGrid target_grid(target.points, target.dims, d_mm);
    for (const auto& p : target.points) {
      if (pred_grid.any_within(p, d_mm)) ++tpr;
    }
    for (const auto& u : pred.points) {
      if (target_grid.any_within(u, d_mm)) ++tpm;
    }
  }
  const auto fn = static_cast<std::int64_t>(target.size()) - tpr;
  const auto fp = static_cast<std::int64_t>(pred.size()) - tpm;
  return static_cast<double>(tpm + tpr) / static_cast<double>(tpm + tpr + fn + fp);
}

double chamfer_l2(const PointSet& a, const PointSet& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_l2: undefined for empty point sets");
  if (a.dims != b.dims) throw std::invalid_argument("chamfer_l2: dimensionality mismatch");
  const double span = joint_span(a, b);
  const double denom = std::cbrt(static_cast<double>(std::max(a.size(), b.size())));
  const double cell = std::max(span / std::max(denom, 1.0), 1e-9);

  HashGrid ga(a.points, a.dims, cell);
  HashGrid gb(b.points, b.dims, cell);
  double sum_ab = 0;
  for (const auto& p : a.points) sum_ab += gb.nearest_distance(p);
  double sum_ba = 0;
  for (const auto& q : b.points) sum_ba += ga.nearest_distance(q);
  return 0.5 * (sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size()));
}

double dice_binary(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dice_binary: size mismatch");
  std::int64_t na = 0, nb = 0, inter = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool fa = a[i] != 0.0, fb = b[i] != 0.0;
    na += fa;
    nb += fb;
    inter += fa && fb;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

MetricReport evaluate_3d(const VoxelGrid& ground_truth, const VoxelGrid& reconstruction) {
  MetricReport report;
  report.plane = 0;
  const VoxelGrid pred_bin = binarize(reconstruction, 0.5);
  const PointSet pred = pointset_from_volume(pred_bin);
  const PointSet gt = pointset_from_volume(ground_truth);
  if (pred.empty() || gt.empty()) {
    report.dice = (pred.empty() && gt.empty()) ? 1.0 : 0.0;
    report.ot1 = report.dice;
    report.ot2 = report.dice;
    report.chamfer_mm.reset();
    return report;
  }
  const RigidFit fit = rigid_register(gt, pred, 3);
  const PointSet gt_reg = apply_fit(gt, fit, 3);
  report.dice = ot_overlap(gt_reg, pred, 0.0);
  report.ot1 = ot_overlap(gt_reg, pred, 1.0);
  report.ot2 = ot_overlap(gt_reg, pred, 2.0);
  report.chamfer_mm = chamfer_l2(gt_reg, pred);
  return report;
}

std::vector<MetricReport> evaluate_reprojection(const VoxelGrid& reconstruction,
                                                const std::vector<DetectorImage>& reference_projections,
                                                const std::vector<ProjectionGeometry>& geometries,
                                                const ReprojectionOptions& options) {
  if (reference_projections.size() != geometries.size()) {
    throw std::invalid_argument("evaluate_reprojection: one geometry per reference projection required");
  }
  const VoxelGrid recon_bin = binarize(reconstruction, 0.5);
  std::vector<MetricReport> reports;
  for (std::size_t plane = 0; plane < geometries.size(); ++plane) {
    const DetectorImage reproj = binarize(forward_project(recon_bin, geometries[plane]), 0.0);
    const DetectorImage ref = binarize(reference_projections[plane], 0.0);
    MetricReport report;
    report.plane = static_cast<int>(plane) + 1;
    if (plane == 0) {
      report.dice = dice_binary(ref.values, reproj.values);
      report.ot1 = ot_overlap(pointset_from_image(ref), pointset_from_image(reproj), 1.0);
      report.ot2 = ot_overlap(pointset_from_image(ref), pointset_from_image(reproj), 2.0);
      const PointSet a = pointset_from_image(ref), b = pointset_from_image(reproj);
      report.chamfer_mm = (a.empty() || b.empty()) ? std::optional<double>() : chamfer_l2(a, b);
      report.geometry_warning = report.dice < options.plane1_dice_floor;
    } else {
      const PointSet ref_pts = pointset_from_image(ref);
      const PointSet reproj_pts = pointset_from_image(reproj);
      if (ref_pts.empty() || reproj_pts.empty()) {
        report.dice = 0;
        report.ot1 = 0;
        report.ot2 = 0;
        report.chamfer_mm.reset();
      } else {
        const RigidFit fit = rigid_register(ref_pts, reproj_pts, 2);
        const PointSet ref_reg = apply_fit(ref_pts, fit, 2);
        report.dice = ot_overlap(ref_reg, reproj_pts, 0.0);
        report.ot1 = ot_overlap(ref_reg, reproj_pts, 1.0);
        report.ot2 = ot_overlap(ref_reg, reproj_pts, 2.0);
        report.chamfer_mm = chamfer_l2(ref_reg, reproj_pts);
      }
    }
    reports.push_back(report);
  }
  return reports;
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::ostringstream os;
  os << "sample_id,plane,dice,ot1,ot2,chamfer_mm\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  double sum[4] = {0, 0, 0, 0}, sumsq[4] = {0, 0, 0, 0};
  std::int64_t n = 0, n_chamfer = 0;
  double chamfer_sum = 0, chamfer_sumsq = 0;
  for (const auto& [id, r] : rows) {
    os << id << "," << r.plane << "," << fmt(r.dice) << "," << fmt(r.ot1) << "," << fmt(r.ot2) << ",";
    if (r.chamfer_mm) {
      os << fmt(*r.chamfer_mm);
      chamfer_sum += *r.chamfer_mm;
      chamfer_sumsq += *r.chamfer_mm * *r.chamfer_mm;
      ++n_chamfer;
    } else {
      os << "nan";
    }
    os << "\n";
    sum[0] += r.dice;
    sum[1] += r.ot1;
    sum[2] += r.ot2;
    sumsq[0] += r.dice * r.dice;
    sumsq[1] += r.ot1 * r.ot1;
    sumsq[2] += r.ot2 * r.ot2;
    ++n;
  }
  if (n > 0) {
    auto mean = [&](double s, std::int64_t count) { return count ? s / static_cast<double>(count) : 0.0; };
    auto stddev = [&](double s, double ss, std::int64_t count) {
      if (count < 2) return 0.0;
      const double m = s / static_cast<double>(count);
      const double var = std::max(0.0, ss / static_cast<double>(count) - m * m);
      return std::sqrt(var * static_cast<double>(count) / static_cast<double>(count - 1));
    };
    os << "mean,," << fmt(mean(sum[0], n)) << "," << fmt(mean(sum[1], n)) << "," << fmt(mean(sum[2], n)) << ","
       << (n_chamfer ? fmt(mean(chamfer_sum, n_chamfer)) : "nan") << "\n";
    os << "std,," << fmt(stddev(sum[0], sumsq[0], n)) << "," << fmt(stddev(sum[1], sumsq[1], n)) << ","
       << fmt(stddev(sum[2], sumsq[2], n)) << ","
       << (n_chamfer ? fmt(stddev(chamfer_sum, chamfer_sumsq, n_chamfer)) : "nan") << "\n";
  }
  return os.str();
}

}  // namespace angio
