#pragma once

#include <cstdint>
#include <vector>

#include "angio/tensor.hpp"

namespace angio {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
  // strict: non-finite gradients throw; lenient: the affected parameter
  // keeps its value and the skip is reported.
  bool strict_nonfinite = true;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  void ensure_initialized(const std::vector<Tensor>& params);
};

struct AdamStepReport {
  int skipped_params = 0;
};

// Bias-corrected Adam update, in place on the parameter storages.
AdamStepReport adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
                         const AdamConfig& cfg);

// Convenience overload reading gradients from param.grad() and clearing
// them afterwards.
AdamStepReport adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace angio
