#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "angio/metrics.hpp"
#include "hash_grid.hpp"

namespace angio {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::array<std::array<double, 3>, 3> euler_xyz(const std::array<double, 3>& rot_deg) {
  const double ax = rot_deg[0] * kDegToRad;
  const double ay = rot_deg[1] * kDegToRad;
  const double az = rot_deg[2] * kDegToRad;
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  // R = Rz * Ry * Rx
  return {{{cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
           {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
           {-sy, cy * sx, cy * cx}}};
}

std::array<double, 3> centroid(const PointSet& ps) {
  std::array<double, 3> c{0, 0, 0};
  for (const auto& p : ps.points)
    for (int k = 0; k < 3; ++k) c[static_cast<std::size_t>(k)] += p[static_cast<std::size_t>(k)];
  for (int k = 0; k < 3; ++k) c[static_cast<std::size_t>(k)] /= static_cast<double>(ps.size());
  return c;
}

PointSet subsample(const PointSet& ps, std::size_t max_points) {
  if (ps.size() <= max_points) return ps;
  PointSet out;
  out.dims = ps.dims;
  const double stride = static_cast<double>(ps.size()) / static_cast<double>(max_points);
  for (std::size_t i = 0; i < max_points; ++i) {
    out.points.push_back(ps.points[static_cast<std::size_t>(static_cast<double>(i) * stride)]);
  }
  return out;
}

// Nelder-Mead on an n-dimensional objective; deterministic, no restarts.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> start, const std::vector<double>& step, int max_iters) {
  const std::size_t n = start.size();
  std::vector<std::vector<double>> simplex(n + 1, start);
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step[i];
  for (std::size_t i = 0; i <= n; ++i) values[i] = f(simplex[i]);

  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<std::size_t> order(n + 1);
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order[0], worst = order[n], second_worst = order[n - 1];

    std::vector<double> cen(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < n; ++k) cen[k] += simplex[i][k];
    }
    for (std::size_t k = 0; k < n; ++k) cen[k] /= static_cast<double>(n);

    auto blend = [&](double alpha) {
      std::vector<double> p(n);
      for (std::size_t k = 0; k < n; ++k) p[k] = cen[k] + alpha * (simplex[worst][k] - cen[k]);
      return p;
    };

    const std::vector<double> reflected = blend(-1.0);
    const double fr = f(reflected);
    if (fr < values[best]) {
      const std::vector<double> expanded = blend(-2.0);
      const double fe = f(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
    } else if (fr < values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = fr;
    } else {
      const std::vector<double> contracted = blend(0.5);
      const double fc = f(contracted);
      if (fc < values[worst]) {
        simplex[worst] = contracted;
        values[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t k = 0; k < n; ++k) {
            simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
          }
          values[i] = f(simplex[i]);
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (values[i] < values[best]) best = i;
  }
  return simplex[best];
}

}  // namespace

std::array<double, 3> RigidFit::apply(const std::array<double, 3>& p, int dims) const {
  const auto r = euler_xyz(rot_deg);
  std::array<double, 3> q{0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      q[static_cast<std::size_t>(i)] +=
          r[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * p[static_cast<std::size_t>(k)];
    }
    q[static_cast<std::size_t>(i)] += trans_mm[static_cast<std::size_t>(i)];
  }
  if (dims == 2) q[2] = p[2];
  return q;
}

PointSet apply_fit(const PointSet& ps, const RigidFit& fit, int dims) {
  PointSet out;
  out.dims = ps.dims;
  out.points.reserve(ps.size());
  for (const auto& p : ps.points) out.points.push_back(fit.apply(p, dims));
  return out;
}

RigidFit rigid_register(const PointSet& moving, const PointSet& fixed, int dims, const RegistrationOptions& options) {
  if (moving.empty() || fixed.empty()) {
    throw std::invalid_argument("rigid_register: point sets must be nonempty");
  }
  if (dims != 2 && dims != 3) throw std::invalid_argument("rigid_register: dims must be 2 or 3");

  const std::array<double, 3> c_moving = centroid(moving);
  const std::array<double, 3> c_fixed = centroid(fixed);
  const PointSet moving_coarse = subsample(moving, options.coarse_subsample);

  auto fit_from = [&](const std::array<double, 3>& rot_deg) {
    // Rotation about the moving centroid followed by centroid alignment:
    // T(p) = R (p - c_m) + c_f  =>  trans = c_f - R c_m.
    RigidFit fit;
    fit.rot_deg = rot_deg;
    const auto r = euler_xyz(rot_deg);
    for (int i = 0; i < 3; ++i) {
      double rc = 0;
      for (int k = 0; k < 3; ++k) {
        rc += r[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * c_moving[static_cast<std::size_t>(k)];
      }
      fit.trans_mm[static_cast<std::size_t>(i)] = c_fixed[static_cast<std::size_t>(i)] - rc;
    }
    if (dims == 2) fit.trans_mm[2] = 0;
    return fit;
  };

  auto score = [&](const RigidFit& fit, const PointSet& mv) { return chamfer_l2(apply_fit(mv, fit, dims), fixed); };

  // Coarse sweep over the rotation grid with centroid-aligned translation,
  // ranked by the cheap one-sided distance into a prebuilt grid of the
  // fixed set; full symmetric Chamfer re-scores the finalists.
  double span = 0;
  {
    double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
    auto fold = [&](const PointSet& ps) {
      for (const auto& p : ps.points) {
        for (int k = 0; k < dims; ++k) {
          lo[k] = std::min(lo[k], p[static_cast<std::size_t>(k)]);
          hi[k] = std::max(hi[k], p[static_cast<std::size_t>(k)]);
        }
      }
    };
    fold(fixed);
    fold(moving);
    for (int k = 0; k < dims; ++k) span = std::max(span, hi[k] - lo[k]);
  }
  detail::HashGrid fixed_grid(fixed.points, fixed.dims, detail::adaptive_cell(span, fixed.size()));
  auto coarse_score = [&](const RigidFit& fit) {
    double sum = 0;
    for (const auto& p : moving_coarse.points) sum += fixed_grid.nearest_distance(fit.apply(p, dims));
    return sum / static_cast<double>(moving_coarse.size());
  };

  RigidFit best = {};
  best.chamfer = coarse_score(best);  // identity candidate first
  const int steps = static_cast<int>(std::round(options.rot_span_deg / options.rot_step_deg));
  auto consider = [&](const std::array<double, 3>& rot) {
    RigidFit fit = fit_from(rot);
    fit.chamfer = coarse_score(fit);
    if (fit.chamfer < best.chamfer) best = fit;
  };
  if (dims == 2) {
    for (int iz = -steps; iz <= steps; ++iz) {
      consider({0, 0, static_cast<double>(iz) * options.rot_step_deg});
    }
  } else {
    for (int ix = -steps; ix <= steps; ++ix)
      for (int iy = -steps; iy <= steps; ++iy)
        for (int iz = -steps; iz <= steps; ++iz) {
          consider({static_cast<double>(ix) * options.rot_step_deg, static_cast<double>(iy) * options.rot_step_deg,
                    static_cast<double>(iz) * options.rot_step_deg});
        }
  }

  // Nelder-Mead refinement on the full moving set.
  const int n_params = dims == 2 ? 3 : 6;
  std::vector<double> start(static_cast<std::size_t>(n_params), 0.0);
  std::vector<double> step(static_cast<std::size_t>(n_params), 0.0);
  if (dims == 2) {
    start = {best.rot_deg[2], best.trans_mm[0], best.trans_mm[1]};
    step = {options.rot_step_deg / 2.0, 1.0, 1.0};
  } else {
    start = {best.rot_deg[0], best.rot_deg[1], best.rot_deg[2], best.trans_mm[0], best.trans_mm[1], best.trans_mm[2]};
    step = {options.rot_step_deg / 2.0, options.rot_step_deg / 2.0, options.rot_step_deg / 2.0, 1.0, 1.0, 1.0};
  }
  auto unpack = [&](const std::vector<double>& v) {
    RigidFit fit;
    if (dims == 2) {
      fit.rot_deg = {0, 0, v[0]};
      fit.trans_mm = {v[1], v[2], 0};
    } else {
      fit.rot_deg = {v[0], v[1], v[2]};
      fit.trans_mm = {v[3], v[4], v[5]};
    }
    return fit;
  };
  auto objective = [&](const std::vector<double>& v) { return score(unpack(v), moving); };
  const std::vector<double> refined = nelder_mead(objective, start, step, options.nelder_mead_iters);

  RigidFit fit = unpack(refined);
  fit.chamfer = score(fit, moving);

  // The identity and coarse winners stay candidates on the full set.
  RigidFit identity = {};
  identity.chamfer = score(identity, moving);
  RigidFit coarse = best;
  coarse.chamfer = score(coarse, moving);
  const RigidFit* winner = &fit;
  if (coarse.chamfer < winner->chamfer) winner = &coarse;
  if (identity.chamfer < winner->chamfer) winner = &identity;
  return *winner;
}

}  // namespace angio
