#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "angio/adam.hpp"
#include "angio/model.hpp"
#include "angio/rng.hpp"
#include "angio/tensor.hpp"

namespace angio {

struct LossWeights {
  double lambda_gp = 10.0;
  double lambda_l1 = 100.0;
  int critic_iters_per_gen = 2;
  // The penalty differentiates the critic input as a whole, i.e. both the
  // prediction channel and the condition channel; set false to restrict it
  // to the prediction channel.
  bool gp_both_channels = true;

  void validate() const;
};

// Any batch-to-(N,1)-score map; lets tests drive the loss machinery with
// hand-built critics.
using CriticFn = std::function<Tensor(const Tensor&)>;

// Mean critic scores over the batch: first real, then fake. The
// Wasserstein estimate is real minus fake.
std::pair<Tensor, Tensor> wasserstein_terms(const CriticFn& critic, const Tensor& y_x, const Tensor& yhat_x);
std::pair<Tensor, Tensor> wasserstein_terms(const Critic& critic, const Tensor& y_x, const Tensor& yhat_x,
                                            Rng* offset_rng = nullptr);

// One epsilon per batch sample, broadcast over that sample's voxels.
// The result is a fresh leaf that requires grad (the penalty
// differentiates the critic at these points).
Tensor interpolate(const Tensor& y_x, const Tensor& yhat_x, Rng& rng);
Tensor interpolate_with_eps(const Tensor& y_x, const Tensor& yhat_x, const std::vector<double>& eps);

// E[(||d D / d input||_2 - 1)^2], differentiable w.r.t. critic parameters.
Tensor gradient_penalty(const CriticFn& critic, const Tensor& y_tilde, const LossWeights& weights);
Tensor gradient_penalty(const Critic& critic, const Tensor& y_tilde, const LossWeights& weights,
                        Rng* offset_rng = nullptr);

// Loss assembly, factored out so the arithmetic is testable in isolation:
// critic side E_fake - E_real + lambda_gp * GP, generator side
// -E_fake + lambda_l1 * L1.
Tensor combine_critic_loss(const Tensor& e_real, const Tensor& e_fake, const Tensor& gp, double lambda_gp);
Tensor combine_generator_loss(const Tensor& e_fake, const Tensor& l1, double lambda_l1);

struct CriticLossParts {
  Tensor loss;      // E_fake - E_real + lambda_gp * GP
  double e_real = 0;
  double e_fake = 0;
  double gp = 0;
};
CriticLossParts critic_loss(const Critic& critic, const Tensor& y_x, const Tensor& yhat_x_detached,
                            const LossWeights& weights, Rng& eps_rng, Rng* offset_rng = nullptr);

struct GeneratorLossParts {
  Tensor loss;  // -E_fake + lambda_l1 * mean |y - yhat|
  double e_fake = 0;
  double l1 = 0;
};
GeneratorLossParts generator_loss(const Critic& critic, const Tensor& y, const Tensor& yhat, const Tensor& condition,
                                  const LossWeights& weights, Rng* offset_rng = nullptr);

// Prediction/truth concatenated with the condition channel; the {0,1,2}
// condition is scaled by 0.5 so both channels live in [0,1].
Tensor make_critic_input(const Tensor& y_or_yhat, const Tensor& condition);

struct TrainState {
  Generator* generator = nullptr;
  Critic* critic = nullptr;
  AdamConfig gen_optim;
  AdamConfig critic_optim;
  AdamState gen_adam;
  AdamState critic_adam;
  std::int64_t critic_updates = 0;
  std::int64_t generator_updates = 0;
  Rng eps_rng{0};
  Rng offset_rng{0};  // only used in random-offset critics
};

struct StepScalars {
  double critic_loss = 0;
  double gen_loss = 0;
  double w_estimate = 0;
  double gp = 0;
  double l1 = 0;
  // Per-update rows for the update-level audit log: (kind, loss) with
  // kind 'c' or 'g'.
  std::vector<std::pair<char, double>> updates;
};

struct Batch {
  Tensor input;         // (N,1,H,W,D), values {0,1,2}
  Tensor ground_truth;  // (N,1,H,W,D), binary
};

// Exactly weights.critic_iters_per_gen critic updates (fresh interpolates
// each) followed by one generator update. Throws on non-finite losses.
StepScalars train_step(TrainState& state, const Batch& batch, const LossWeights& weights);

}  // namespace angio
