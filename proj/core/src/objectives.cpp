#include "angio/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace angio {

namespace {

// Temporarily removes a parameter set from the autodiff graph; gradients
// still flow through the frozen network to its inputs.
class ParamFreeze {
 public:
  explicit ParamFreeze(ParamStore& params) : params_(params) {
    for (auto& [name, t] : params_.items) t.set_requires_grad(false);
  }
  ~ParamFreeze() {
    for (auto& [name, t] : params_.items) t.set_requires_grad(true);
  }
  ParamFreeze(const ParamFreeze&) = delete;
  ParamFreeze& operator=(const ParamFreeze&) = delete;

 private:
  ParamStore& params_;
};

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_gp > 0) || !(lambda_l1 > 0) || critic_iters_per_gen < 1) {
    throw std::invalid_argument("LossWeights: lambda_gp, lambda_l1 and critic_iters_per_gen must be positive");
  }
}

Tensor make_critic_input(const Tensor& y_or_yhat, const Tensor& condition) {
  return concat({y_or_yhat, mul_scalar(condition, 0.5)}, 1);
}

std::pair<Tensor, Tensor> wasserstein_terms(const CriticFn& critic, const Tensor& y_x, const Tensor& yhat_x) {
  Tensor e_real = mean_all(critic(y_x));
  Tensor e_fake = mean_all(critic(yhat_x));
  return {e_real, e_fake};
}

std::pair<Tensor, Tensor> wasserstein_terms(const Critic& critic, const Tensor& y_x, const Tensor& yhat_x,
                                            Rng* offset_rng) {
  return wasserstein_terms([&](const Tensor& in) { return critic.forward(in, offset_rng); }, y_x, yhat_x);
}

Tensor interpolate_with_eps(const Tensor& y_x, const Tensor& yhat_x, const std::vector<double>& eps) {
  if (y_x.shape() != yhat_x.shape()) {
    throw std::invalid_argument("interpolate: shapes disagree, " + shape_str(y_x.shape()) + " vs " +
                                shape_str(yhat_x.shape()));
  }
  const std::int64_t n = y_x.shape()[0];
  if (static_cast<std::int64_t>(eps.size()) != n) {
    throw std::invalid_argument("interpolate: need one epsilon per batch sample");
  }
  NoGradGuard ng;
  Shape eshape(y_x.shape().size(), 1);
  eshape[0] = n;
  Tensor e = Tensor::from_vector(eshape, eps, y_x.dtype());
  Tensor one_minus = add_scalar(neg(e), 1.0);
  Tensor mixed = add(mul(broadcast_to(e, y_x.shape()), y_x), mul(broadcast_to(one_minus, y_x.shape()), yhat_x));
  // Fresh leaf: the penalty differentiates the critic at these points, not
  // through their construction.
  Tensor leaf = mixed.detach();
  leaf.set_requires_grad(true);
  return leaf;
}

Tensor interpolate(const Tensor& y_x, const Tensor& yhat_x, Rng& rng) {
  std::vector<double> eps(static_cast<std::size_t>(y_x.shape()[0]));
  for (auto& e : eps) e = rng.uniform();
  return interpolate_with_eps(y_x, yhat_x, eps);
}

Tensor gradient_penalty(const CriticFn& critic, const Tensor& y_tilde, const LossWeights& weights) {
  Tensor scores = critic(y_tilde);  // (N,1)
  // Per-sample input gradients in one sweep: samples are independent in
  // the critic, so the gradient of the score sum splits per sample.
  Tensor grad = backward_as_graph(sum_all(scores), y_tilde);
  Tensor g = grad;
  if (!weights.gp_both_channels) {
    g = narrow(grad, 1, 0, 1);
  }
  const auto& s = g.shape();
  Shape per_sample(s.size(), 1);
  per_sample[0] = s[0];
  Tensor norms = sqrt(sum_to(square(g), per_sample));
  return mean_all(square(add_scalar(norms, -1.0)));
}

Tensor gradient_penalty(const Critic& critic, const Tensor& y_tilde, const LossWeights& weights, Rng* offset_rng) {
  return gradient_penalty([&](const Tensor& in) { return critic.forward(in, offset_rng); }, y_tilde, weights);
}

Tensor combine_critic_loss(const Tensor& e_real, const Tensor& e_fake, const Tensor& gp, double lambda_gp) {
  return add(sub(e_fake, e_real), mul_scalar(gp, lambda_gp));
}

Tensor combine_generator_loss(const Tensor& e_fake, const Tensor& l1, double lambda_l1) {
  return add(neg(e_fake), mul_scalar(l1, lambda_l1));
}

CriticLossParts critic_loss(const Critic& critic, const Tensor& y_x, const Tensor& yhat_x_detached,
                            const LossWeights& weights, Rng& eps_rng, Rng* offset_rng) {
  weights.validate();
  auto [e_real, e_fake] = wasserstein_terms(critic, y_x, yhat_x_detached, offset_rng);
  Tensor y_tilde = interpolate(y_x, yhat_x_detached, eps_rng);
  Tensor gp = gradient_penalty(critic, y_tilde, weights, offset_rng);
  CriticLossParts parts;
  parts.loss = combine_critic_loss(e_real, e_fake, gp, weights.lambda_gp);
  parts.e_real = e_real.item();
  parts.e_fake = e_fake.item();
  parts.gp = gp.item();
  return parts;
}

GeneratorLossParts generator_loss(const Critic& critic, const Tensor& y, const Tensor& yhat, const Tensor& condition,
                                  const LossWeights& weights, Rng* offset_rng) {
  weights.validate();
  // The critic is frozen during the generator phase: its parameters stay
  // constants, gradients flow only through its input.
  ParamFreeze freeze(const_cast<Critic&>(critic).params());
  Tensor yhat_x = make_critic_input(yhat, condition);
  Tensor e_fake = mean_all(critic.forward(yhat_x, offset_rng));
  Tensor l1 = mean_all(abs(sub(y, yhat)));
  GeneratorLossParts parts;
  parts.loss = combine_generator_loss(e_fake, l1, weights.lambda_l1);
  parts.e_fake = e_fake.item();
  parts.l1 = l1.item();
  return parts;
}

StepScalars train_step(TrainState& state, const Batch& batch, const LossWeights& weights) {
  weights.validate();
  if (!state.generator || !state.critic) throw std::invalid_argument("train_step: networks not wired");
  if (batch.input.shape()[0] < 1) throw std::invalid_argument("train_step: empty batch");
  Generator& gen = *state.generator;
  Critic& critic = *state.critic;
  Rng* offset_rng = critic.config().offset_mode == "random" ? &state.offset_rng : nullptr;

  StepScalars scalars;

  // Critic phase: the generator output is recomputed detached each
  // iteration so no gradient can reach generator parameters.
  Tensor condition = batch.input;
  Tensor y_x = make_critic_input(batch.ground_truth, condition);
  for (int it = 0; it < weights.critic_iters_per_gen; ++it) {
    Tensor yhat;
    {
      NoGradGuard ng;
      yhat = gen.forward(batch.input);
    }
    Tensor yhat_x;
    {
      NoGradGuard ng;
      yhat_x = make_critic_input(yhat, condition);
    }
    critic.params().zero_grads();
    CriticLossParts parts = critic_loss(critic, y_x, yhat_x, weights, state.eps_rng, offset_rng);
    const double loss_value = parts.loss.item();
    if (!std::isfinite(loss_value)) throw std::runtime_error("train_step: non-finite critic loss");
    backward(parts.loss, {}, critic.params().tensors());
    if (state.critic_optim.lr > 0) {
      auto critic_params = critic.params().tensors();
      adam_step(critic_params, state.critic_adam, state.critic_optim);
    } else {
      critic.params().zero_grads();
    }
    state.critic_updates += 1;
    scalars.critic_loss = loss_value;
    scalars.w_estimate = parts.e_real - parts.e_fake;
    scalars.gp = parts.gp;
    scalars.updates.emplace_back('c', loss_value);
  }

  // Generator phase: the critic is frozen inside generator_loss, so only
  // generator parameters can receive gradients.
  gen.params().zero_grads();
  Tensor yhat = gen.forward(batch.input);
  GeneratorLossParts parts = generator_loss(critic, batch.ground_truth, yhat, condition, weights, offset_rng);
  const double gen_loss_value = parts.loss.item();
  if (!std::isfinite(gen_loss_value)) throw std::runtime_error("train_step: non-finite generator loss");
  backward(parts.loss, {}, gen.params().tensors());
  if (state.gen_optim.lr > 0) {
    auto gen_params = gen.params().tensors();
    adam_step(gen_params, state.gen_adam, state.gen_optim);
  } else {
    gen.params().zero_grads();
  }
  state.generator_updates += 1;
  scalars.gen_loss = gen_loss_value;
  scalars.l1 = parts.l1;
  scalars.updates.emplace_back('g', gen_loss_value);
  return scalars;
}

}  // namespace angio
