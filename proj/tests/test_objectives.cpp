#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "angio/objectives.hpp"
#include "test_support.hpp"

using namespace angio;
using namespace angio::testing;

namespace {

GeneratorConfig tiny_generator_config(Dtype dtype = Dtype::kF64) {
  GeneratorConfig cfg;
  cfg.depth = 2;
  cfg.channels = {4, 8};
  cfg.ctl_layers = 1;
  cfg.ctl_heads = 4;
  cfg.dtype = dtype;
  return cfg;
}

CriticConfig tiny_critic_config(Dtype dtype = Dtype::kF64) {
  CriticConfig cfg;
  cfg.dsconv_kernel_len = 3;
  cfg.dsconv_channels = 2;
  cfg.conv_channels = 2;
  cfg.downsample_levels = 2;
  cfg.dtype = dtype;
  return cfg;
}

std::uint64_t param_checksum(const ParamStore& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : params.items) {
    if (t.dtype() == Dtype::kF32) {
      for (const float v : t.cdata_f32()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        h = (h ^ bits) * 1099511628211ULL;
      }
    } else {
      for (const double v : t.cdata_f64()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        h = (h ^ bits) * 1099511628211ULL;
      }
    }
  }
  return h;
}

}  // namespace

TEST_CASE("constant critic gives a zero Wasserstein estimate") {
  CriticFn constant = [](const Tensor& in) {
    return Tensor::full({in.shape()[0], 1}, 3.7, in.dtype());
  };
  Rng rng(1);
  Tensor a = random_tensor(rng, {3, 2, 4, 4, 4});
  Tensor b = random_tensor(rng, {3, 2, 4, 4, 4});
  auto [e_real, e_fake] = wasserstein_terms(constant, a, b);
  CHECK(e_real.item() - e_fake.item() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("wasserstein estimate from per-sample scores is plain arithmetic") {
  // real scores (2, 2), fake scores (0.5, 0.5) -> W = 1.5
  Tensor real_scores = Tensor::from_vector({2, 1}, {2.0, 2.0}, Dtype::kF64);
  Tensor fake_scores = Tensor::from_vector({2, 1}, {0.5, 0.5}, Dtype::kF64);
  const double w = mean_all(real_scores).item() - mean_all(fake_scores).item();
  CHECK(w == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("batch mean equals a per-sample loop oracle") {
  Rng rng(2);
  Critic critic(tiny_critic_config(), rng);
  Rng data_rng(3);
  Tensor batch = random_tensor(data_rng, {4, 2, 4, 4, 4});
  Tensor scores = critic.forward(batch);
  double loop_mean = 0;
  for (std::int64_t n = 0; n < 4; ++n) {
    Tensor one = narrow(batch, 0, n, 1);
    loop_mean += critic.forward(one).item();
  }
  loop_mean /= 4.0;
  CHECK(mean_all(scores).item() == doctest::Approx(loop_mean).epsilon(1e-7));
}

TEST_CASE("interpolation endpoints are exact and interiors are bounded") {
  Rng rng(4);
  Tensor y = random_tensor(rng, {3, 2, 4, 4, 4}, Dtype::kF64, 0, 1);
  Tensor yhat = random_tensor(rng, {3, 2, 4, 4, 4}, Dtype::kF64, 0, 1);

  Tensor at_one = interpolate_with_eps(y, yhat, {1.0, 1.0, 1.0});
  CHECK(bitwise_equal(at_one.detach(), y.detach()));
  Tensor at_zero = interpolate_with_eps(y, yhat, {0.0, 0.0, 0.0});
  CHECK(bitwise_equal(at_zero.detach(), yhat.detach()));

  Rng eps_rng(5);
  Tensor mixed = interpolate(y, yhat, eps_rng);
  CHECK(mixed.requires_grad());
  const auto mv = mixed.to_vector();
  const auto yv = y.to_vector();
  const auto hv = yhat.to_vector();
  for (std::size_t i = 0; i < mv.size(); ++i) {
    const double lo = std::min(yv[i], hv[i]) - 1e-12;
    const double hi = std::max(yv[i], hv[i]) + 1e-12;
    CHECK(mv[i] >= lo);
    CHECK(mv[i] <= hi);
  }
}

TEST_CASE("penalty of a unit-norm linear critic is zero, exactly") {
  // D(x) = <w, x> with ||w|| = 1: the input gradient is w everywhere, so
  // the penalty vanishes.
  Tensor w = Tensor::from_vector({8, 1}, {0.5, 0.5, 0.5, 0.5, 0, 0, 0, 0}, Dtype::kF64, true);
  CriticFn linear_critic = [&](const Tensor& in) {
    return matmul(reshape(in, {in.shape()[0], 8}), w);
  };
  Rng rng(6);
  Tensor x = random_tensor(rng, {3, 8}, Dtype::kF64, -1, 1, true);
  LossWeights weights;
  Tensor gp = gradient_penalty(linear_critic, x, weights);
  CHECK(gp.item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("penalty of the sum critic over 4 elements is exactly 1") {
  CriticFn sum_critic = [](const Tensor& in) {
    return sum_to(reshape(in, {in.shape()[0], 4}), Shape{in.shape()[0], 1});
  };
  Tensor x = Tensor::from_vector({1, 4}, {0.3, -0.4, 0.9, 0.1}, Dtype::kF64, true);
  LossWeights weights;
  Tensor gp = gradient_penalty(sum_critic, x, weights);
  // ||(1,1,1,1)|| = 2 -> (2-1)^2 = 1.
  CHECK(gp.item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("penalty gradient w.r.t. critic weights matches finite differences") {
  Rng rng(7);
  Critic critic(tiny_critic_config(), rng);
  Rng data_rng(8);
  Tensor x = random_tensor(data_rng, {2, 2, 4, 4, 4}, Dtype::kF64, 0, 1, true);
  LossWeights weights;

  Tensor gp = gradient_penalty(critic, x, weights);
  backward(gp, {}, critic.params().tensors());

  double worst = 0;
  for (auto& [name, t] : critic.params().items) {
    if (name.find("offset") != std::string::npos) continue;  // zero-init block, checked separately below
    const auto analytic = t.grad().to_vector();
    auto numeric = finite_difference([&]() { return gradient_penalty(critic, x, weights).item(); }, t, 1e-5);
    worst = std::max(worst, max_rel_error(analytic, numeric));
  }
  CHECK(worst < 1e-4);
  critic.params().zero_grads();
}

TEST_CASE("critic loss combines terms with the production coefficient") {
  Tensor e_real = Tensor::scalar(2.0, Dtype::kF64);
  Tensor e_fake = Tensor::scalar(0.5, Dtype::kF64);
  Tensor gp = Tensor::scalar(1.0, Dtype::kF64);
  const Tensor loss = combine_critic_loss(e_real, e_fake, gp, 10.0);
  CHECK(loss.item() == doctest::Approx(8.5).epsilon(1e-12));
}

TEST_CASE("generator loss combines terms with the production coefficient") {
  Tensor e_fake = Tensor::scalar(0.5, Dtype::kF64);
  Tensor l1 = Tensor::scalar(0.02, Dtype::kF64);
  const Tensor loss = combine_generator_loss(e_fake, l1, 100.0);
  CHECK(loss.item() == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("perfect reconstruction with a zero critic gives zero generator loss") {
  Rng rng(9);
  Critic critic(tiny_critic_config(), rng);
  for (auto& [name, t] : critic.params().items) {
    for (auto& v : t.data_f64()) v = 0.0;
  }
  Rng data_rng(10);
  Tensor y = random_tensor(data_rng, {2, 1, 4, 4, 4}, Dtype::kF64, 0, 1);
  Tensor condition = random_tensor(data_rng, {2, 1, 4, 4, 4}, Dtype::kF64, 0, 2);
  LossWeights weights;
  auto parts = generator_loss(critic, y, y, condition, weights);
  CHECK(parts.loss.item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("critic loss backward leaves generator parameters untouched") {
  Rng rng(11);
  Generator gen(tiny_generator_config(), rng);
  Critic critic(tiny_critic_config(), rng);
  Rng data_rng(12);
  Tensor input = random_tensor(data_rng, {2, 1, 4, 4, 4}, Dtype::kF64, 0, 2);
  Tensor truth = random_tensor(data_rng, {2, 1, 4, 4, 4}, Dtype::kF64, 0, 1);

  Tensor yhat_detached;
  {
    NoGradGuard ng;
    yhat_detached = gen.forward(input);
  }
  Tensor y_x = make_critic_input(truth, input);
  Tensor yhat_x;
  {
    NoGradGuard ng;
    yhat_x = make_critic_input(yhat_detached, input);
  }
  LossWeights weights;
  Rng eps_rng(13);
  auto parts = critic_loss(critic, y_x, yhat_x, weights, eps_rng);
  backward(parts.loss, {}, critic.params().tensors());
  for (const auto& [name, t] : gen.params().items) CHECK_FALSE(t.grad().defined());
  critic.params().zero_grads();
}

TEST_CASE("generator loss backward leaves critic parameters untouched") {
  Rng rng(14);
  Generator gen(tiny_generator_config(), rng);
  Critic critic(tiny_critic_config(), rng);
  Rng data_rng(15);
  Tensor input = random_tensor(data_rng, {1, 1, 4, 4, 4}, Dtype::kF64, 0, 2);
  Tensor truth = random_tensor(data_rng, {1, 1, 4, 4, 4}, Dtype::kF64, 0, 1);

  Tensor yhat = gen.forward(input);
  LossWeights weights;
  auto parts = generator_loss(critic, truth, yhat, input, weights);
  backward(parts.loss, {}, gen.params().tensors());
  for (const auto& [name, t] : critic.params().items) CHECK_FALSE(t.grad().defined());
  for (const auto& [name, t] : gen.params().items) CHECK(t.grad().defined());
  gen.params().zero_grads();
}

TEST_CASE("train step runs exactly two critic updates then one generator update") {
  Rng rng(16);
  Generator gen(tiny_generator_config(Dtype::kF32), rng);
  Critic critic(tiny_critic_config(Dtype::kF32), rng);
  TrainState state;
  state.generator = &gen;
  state.critic = &critic;
  state.eps_rng = Rng(17);
  state.offset_rng = Rng(18);

  Rng data_rng(19);
  Batch batch;
  batch.input = random_tensor(data_rng, {2, 1, 8, 8, 8}, Dtype::kF32, 0, 2);
  batch.ground_truth = random_tensor(data_rng, {2, 1, 8, 8, 8}, Dtype::kF32, 0, 1);

  LossWeights weights;
  const auto scalars = train_step(state, batch, weights);
  CHECK(state.critic_updates == 2);
  CHECK(state.generator_updates == 1);
  REQUIRE(scalars.updates.size() == 3);
  CHECK(scalars.updates[0].first == 'c');
  CHECK(scalars.updates[1].first == 'c');
  CHECK(scalars.updates[2].first == 'g');
  CHECK(std::isfinite(scalars.critic_loss));
  CHECK(std::isfinite(scalars.gen_loss));
  CHECK(std::isfinite(scalars.w_estimate));
  CHECK(std::isfinite(scalars.gp));
  CHECK(std::isfinite(scalars.l1));

  const auto again = train_step(state, batch, weights);
  CHECK(state.critic_updates == 4);
  CHECK(state.generator_updates == 2);
  CHECK(std::isfinite(again.gen_loss));
}

TEST_CASE("zero learning rates leave both networks bit-identical") {
  Rng rng(20);
  Generator gen(tiny_generator_config(Dtype::kF32), rng);
  Critic critic(tiny_critic_config(Dtype::kF32), rng);
  TrainState state;
  state.generator = &gen;
  state.critic = &critic;
  state.gen_optim.lr = 0.0;
  state.critic_optim.lr = 0.0;
  state.eps_rng = Rng(21);

  Rng data_rng(22);
  Batch batch;
  batch.input = random_tensor(data_rng, {2, 1, 4, 4, 4}, Dtype::kF32, 0, 2);
  batch.ground_truth = random_tensor(data_rng, {2, 1, 4, 4, 4}, Dtype::kF32, 0, 1);

  const auto gen_sum = param_checksum(gen.params());
  const auto critic_sum = param_checksum(critic.params());
  train_step(state, batch, {});
  CHECK(param_checksum(gen.params()) == gen_sum);
  CHECK(param_checksum(critic.params()) == critic_sum);
}

TEST_CASE("each network's update never touches the other's weights") {
  Rng rng(23);
  Generator gen(tiny_generator_config(Dtype::kF32), rng);
  Critic critic(tiny_critic_config(Dtype::kF32), rng);
  TrainState state;
  state.generator = &gen;
  state.critic = &critic;
  state.critic_optim.lr = 1e-3;
  state.gen_optim.lr = 0.0;  // generator frozen this step
  state.eps_rng = Rng(24);

  Rng data_rng(25);
  Batch batch;
  batch.input = random_tensor(data_rng, {2, 1, 4, 4, 4}, Dtype::kF32, 0, 2);
  batch.ground_truth = random_tensor(data_rng, {2, 1, 4, 4, 4}, Dtype::kF32, 0, 1);

  const auto gen_before = param_checksum(gen.params());
  const auto critic_before = param_checksum(critic.params());
  train_step(state, batch, {});
  CHECK(param_checksum(gen.params()) == gen_before);       // only critic stepped
  CHECK(param_checksum(critic.params()) != critic_before);  // critic did move

  state.critic_optim.lr = 0.0;
  state.gen_optim.lr = 1e-3;
  const auto critic_frozen = param_checksum(critic.params());
  train_step(state, batch, {});
  CHECK(param_checksum(critic.params()) == critic_frozen);  // only generator stepped
  CHECK(param_checksum(gen.params()) != gen_before);
}

TEST_CASE("penalty is invariant under batch permutation") {
  Rng rng(26);
  Critic critic(tiny_critic_config(), rng);
  Rng data_rng(27);
  Tensor x = random_tensor(data_rng, {4, 2, 4, 4, 4}, Dtype::kF64, 0, 1);

  // Reverse the batch dim.
  Tensor reversed = concat({narrow(x, 0, 3, 1), narrow(x, 0, 2, 1), narrow(x, 0, 1, 1), narrow(x, 0, 0, 1)}, 0);
  Tensor xa = x.detach();
  xa.set_requires_grad(true);
  Tensor xb = reversed.detach();
  xb.set_requires_grad(true);
  LossWeights weights;
  const double a = gradient_penalty(critic, xa, weights).item();
  const double b = gradient_penalty(critic, xb, weights).item();
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("one critic Adam step decreases the critic loss on the same batch") {
  // Frozen generator, fixed interpolates; measured over 100 seeded trials.
  int improved = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(9000 + static_cast<std::uint64_t>(trial));
    Critic critic(tiny_critic_config(), rng);
    Rng data_rng(17000 + static_cast<std::uint64_t>(trial));
    // Production-shaped inputs: binary prediction/truth channel, halved
    // {0,1,2} condition channel.
    auto sample_like = [&](double fg_fraction) {
      Tensor t = Tensor::zeros({2, 2, 8, 8, 8}, Dtype::kF64);
      auto d = t.data_f64();
      const std::size_t per_channel = 8 * 8 * 8;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const bool condition_channel = (i / per_channel) % 2 == 1;
        if (condition_channel) {
          const double u = data_rng.uniform();
          d[i] = u < 0.1 ? 1.0 : (u < 0.25 ? 0.5 : 0.0);
        } else {
          d[i] = data_rng.uniform() < fg_fraction ? 1.0 : 0.0;
        }
      }
      return t;
    };
    Tensor y_x = sample_like(0.08);
    Tensor yhat_x = sample_like(0.2);
    const std::vector<double> eps{data_rng.uniform(), data_rng.uniform()};

    LossWeights weights;
    auto loss_now = [&]() {
      auto [e_real, e_fake] = wasserstein_terms(critic, y_x, yhat_x);
      Tensor y_tilde = interpolate_with_eps(y_x, yhat_x, eps);
      Tensor gp = gradient_penalty(critic, y_tilde, weights);
      return combine_critic_loss(e_real, e_fake, gp, weights.lambda_gp);
    };

    Tensor loss = loss_now();
    const double before = loss.item();
    backward(loss, {}, critic.params().tensors());
    auto params = critic.params().tensors();
    AdamState adam;
    AdamConfig cfg;
    cfg.lr = 1e-4;
    adam_step(params, adam, cfg);
    critic.params().zero_grads();
    const double after = loss_now().item();
    if (after < before) ++improved;
  }
  CHECK(improved >= 95);
}

TEST_CASE("single-channel penalty flag restricts the norm to the prediction channel") {
  Rng rng(30);
  Critic critic(tiny_critic_config(), rng);
  Rng data_rng(31);
  Tensor x = random_tensor(data_rng, {2, 2, 4, 4, 4}, Dtype::kF64, 0, 1, true);
  LossWeights both;
  LossWeights single;
  single.gp_both_channels = false;
  const double gp_both = gradient_penalty(critic, x, both).item();
  const double gp_single = gradient_penalty(critic, x, single).item();
  CHECK(std::isfinite(gp_both));
  CHECK(std::isfinite(gp_single));
  CHECK(gp_both != gp_single);
}
