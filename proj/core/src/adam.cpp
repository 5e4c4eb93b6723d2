#include "angio/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace angio {

void AdamState::ensure_initialized(const std::vector<Tensor>& params) {
  if (!m.empty()) {
    if (m.size() != params.size()) throw std::invalid_argument("AdamState: parameter count changed");
    return;
  }
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.push_back(Tensor::zeros(p.shape(), p.dtype()));
    v.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
}

namespace {

template <typename T>
void update_one(std::span<T> p, std::span<const T> g, std::span<T> m, std::span<T> v, const AdamConfig& cfg,
                double bc1, double bc2) {
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.lr);
  const T eps = static_cast<T>(cfg.eps);
  const T ibc1 = static_cast<T>(1.0 / bc1);
  const T ibc2 = static_cast<T>(1.0 / bc2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    const T mhat = m[i] * ibc1;
    const T vhat = v[i] * ibc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

AdamStepReport adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
                         const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads size mismatch");
  if (cfg.lr <= 0) throw std::invalid_argument("adam_step: learning rate must be positive");
  state.ensure_initialized(params);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  AdamStepReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    if (!g.defined()) {
      ++report.skipped_params;
      continue;
    }
    if (g.shape() != p.shape()) {
      throw std::invalid_argument("adam_step: gradient shape " + shape_str(g.shape()) +
                                  " does not match parameter shape " + shape_str(p.shape()));
    }
    if (!g.all_finite()) {
      if (cfg.strict_nonfinite) throw std::runtime_error("adam_step: non-finite gradient for parameter " + std::to_string(i));
      ++report.skipped_params;
      continue;
    }
    if (p.dtype() == Dtype::kF32) {
      update_one<float>(p.data_f32(), g.cdata_f32(), state.m[i].data_f32(), state.v[i].data_f32(), cfg, bc1, bc2);
    } else {
      update_one<double>(p.data_f64(), g.cdata_f64(), state.m[i].data_f64(), state.v[i].data_f64(), cfg, bc1, bc2);
    }
  }
  return report;
}

AdamStepReport adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (auto& p : params) grads.push_back(p.grad());
  const auto report = adam_step(params, grads, state, cfg);
  for (auto& p : params) p.clear_grad();
  return report;
}

}  // namespace angio
