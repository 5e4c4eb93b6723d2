#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "angio/rng.hpp"
#include "angio/tensor.hpp"

namespace angio {

// Named trainable leaves in registration order; the order is the contract
// for optimizer state and checkpoints.
struct ParamStore {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor add(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    items.emplace_back(name, t);
    return items.back().second;
  }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(items.size());
    for (const auto& [n, t] : items) out.push_back(t);
    return out;
  }
  const Tensor& at(const std::string& name) const;
  void zero_grads() {
    for (auto& [n, t] : items) t.clear_grad();
  }
};

struct GeneratorConfig {
  int depth = 3;
  std::vector<std::int64_t> channels{8, 16, 32};  // per level, encoder order
  int ctl_layers = 8;
  int ctl_heads = 8;
  int ctl_mlp_ratio = 2;
  std::string norm_kind = "instance";  // "instance" | "none"
  std::string output_activation = "sigmoid";  // "sigmoid" | "none"
  Dtype dtype = Dtype::kF32;

  void validate() const;
};

struct CriticConfig {
  std::int64_t dsconv_kernel_len = 9;  // odd
  std::int64_t dsconv_channels = 8;    // per-axis output channels
  std::int64_t conv_channels = 8;
  int downsample_levels = 3;
  std::string offset_mode = "learned";  // "learned" | "random"
  double leaky_slope = 0.2;
  Dtype dtype = Dtype::kF32;

  void validate() const;
};

// Volumetric encoder-decoder with latent transformer layers at the
// bottleneck. Input and output are (N, 1, H, W, D); the output passes
// through a sigmoid so values live in (0, 1).
class Generator {
 public:
  Generator(const GeneratorConfig& config, Rng& init_rng);

  Tensor forward(const Tensor& x) const;
  // Transformer stack alone, exposed for the equivariance contract.
  Tensor ctl_forward(const Tensor& f_input) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
  ParamStore params_;
};

// Wasserstein critic: a dynamic snake convolution branch and a plain
// convolution branch side by side at the first layer, then strided
// downsampling to one unbounded score per sample.
class Critic {
 public:
  Critic(const CriticConfig& config, Rng& init_rng);

  // input (N, 2, H, W, D): [prediction-or-truth, condition]. offset_rng is
  // only consulted in "random" offset mode.
  Tensor forward(const Tensor& y_with_condition, Rng* offset_rng = nullptr) const;

  // One snake-convolution pass over all three axes, concatenated on the
  // channel dim: (N, C, H, W, D) -> (N, 3*dsconv_channels, H, W, D).
  Tensor dsconv_forward(const Tensor& f, Rng* offset_rng = nullptr) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const CriticConfig& config() const { return config_; }

 private:
  CriticConfig config_;
  std::int64_t in_channels_ = 2;
  ParamStore params_;
};

// Checkpoint helpers shared by both networks.
void load_params(ParamStore& params, const std::vector<std::pair<std::string, Tensor>>& tensors);

}  // namespace angio
