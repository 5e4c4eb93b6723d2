#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "angio/rng.hpp"
#include "angio/tensor.hpp"

namespace angio::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, Dtype dtype = Dtype::kF64, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = rng.uniform(lo, hi);
  Tensor t = Tensor::from_vector(std::move(shape), values, dtype);
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

// Central finite differences of a scalar function w.r.t. one leaf tensor.
// Step scales with the local magnitude, per the gradient-check protocol.
inline std::vector<double> finite_difference(const std::function<double()>& f, Tensor& leaf,
                                             double step_scale = 1e-5) {
  std::vector<double> grad(static_cast<std::size_t>(leaf.numel()));
  auto data = leaf.data_f64();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double x0 = data[i];
    const double h = step_scale * std::max(1.0, std::abs(x0));
    data[i] = x0 + h;
    const double fp = f();
    data[i] = x0 - h;
    const double fm = f();
    data[i] = x0;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// max_i |a_i - b_i| / max(1, ||b||_inf)
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double max_abs = 0, scale = 1.0;
  for (const double v : b) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < a.size(); ++i) max_abs = std::max(max_abs, std::abs(a[i] - b[i]));
  return max_abs / scale;
}

inline double rel_error_norm(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(1e-12, std::sqrt(den));
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  if (a.dtype() == Dtype::kF32) {
    auto da = a.cdata_f32();
    auto db = b.cdata_f32();
    for (std::size_t i = 0; i < da.size(); ++i) {
      if (std::memcmp(&da[i], &db[i], sizeof(float)) != 0) return false;
    }
  } else {
    auto da = a.cdata_f64();
    auto db = b.cdata_f64();
    for (std::size_t i = 0; i < da.size(); ++i) {
      if (std::memcmp(&da[i], &db[i], sizeof(double)) != 0) return false;
    }
  }
  return true;
}

}  // namespace angio::testing
