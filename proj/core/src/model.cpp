#include "angio/model.hpp"

#include <cmath>
#include <stdexcept>

namespace angio {

namespace {

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  if (t.dtype() == Dtype::kF32) {
    for (auto& v : t.data_f32()) v = static_cast<float>(rng.uniform(lo, hi));
  } else {
    for (auto& v : t.data_f64()) v = rng.uniform(lo, hi);
  }
}

Tensor kaiming_conv(ParamStore& params, const std::string& name, std::int64_t cout, std::int64_t cin,
                    std::int64_t k, Rng& rng, Dtype dtype) {
  Tensor w = Tensor::zeros({cout, cin, k, k, k}, dtype);
  const double bound = std::sqrt(6.0 / static_cast<double>(cin * k * k * k));
  fill_uniform(w, rng, -bound, bound);
  return params.add(name, w);
}

Tensor kaiming_linear(ParamStore& params, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng,
                      Dtype dtype) {
  Tensor w = Tensor::zeros({in, out}, dtype);
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  fill_uniform(w, rng, -bound, bound);
  return params.add(name, w);
}

}  // namespace

const Tensor& ParamStore::at(const std::string& name) const {
  for (const auto& [n, t] : items) {
    if (n == name) return t;
  }
  throw std::out_of_range("ParamStore: no parameter named '" + name + "'");
}

void load_params(ParamStore& params, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  for (auto& [name, dst] : params.items) {
    const Tensor* src = nullptr;
    for (const auto& [n, t] : tensors) {
      if (n == name) {
        src = &t;
        break;
      }
    }
    if (!src) throw std::runtime_error("load_params: checkpoint is missing tensor '" + name + "'");
    if (src->shape() != dst.shape() || src->dtype() != dst.dtype()) {
      throw std::runtime_error("load_params: tensor '" + name + "' has shape " + shape_str(src->shape()) +
                               ", expected " + shape_str(dst.shape()));
    }
    if (dst.dtype() == Dtype::kF32) {
      auto d = dst.data_f32();
      auto s = src->cdata_f32();
      std::copy(s.begin(), s.end(), d.begin());
    } else {
      auto d = dst.data_f64();
      auto s = src->cdata_f64();
      std::copy(s.begin(), s.end(), d.begin());
    }
  }
}

void GeneratorConfig::validate() const {
  if (depth < 2) throw std::invalid_argument("GeneratorConfig: depth must be >= 2");
  if (static_cast<int>(channels.size()) != depth) {
    throw std::invalid_argument("GeneratorConfig: need one channel count per level");
  }
  for (std::size_t i = 1; i < channels.size(); ++i) {
    if (channels[i] <= channels[i - 1]) {
      throw std::invalid_argument("GeneratorConfig: channels must be strictly increasing down the encoder");
    }
  }
  if (ctl_layers < 0 || ctl_heads < 1 || ctl_mlp_ratio < 1) {
    throw std::invalid_argument("GeneratorConfig: bad transformer sizes");
  }
  if (channels.back() % ctl_heads != 0) {
    throw std::invalid_argument("GeneratorConfig: ctl_heads must divide the latent channel count");
  }
  if (norm_kind != "instance" && norm_kind != "none") {
    throw std::invalid_argument("GeneratorConfig: norm_kind must be 'instance' or 'none'");
  }
  if (output_activation != "sigmoid" && output_activation != "none") {
    throw std::invalid_argument("GeneratorConfig: output_activation must be 'sigmoid' or 'none'");
  }
}

void CriticConfig::validate() const {
  if (dsconv_kernel_len < 3 || dsconv_kernel_len % 2 == 0) {
    throw std::invalid_argument("CriticConfig: dsconv_kernel_len must be odd and >= 3");
  }
  if (dsconv_channels < 1 || conv_channels < 1) {
    throw std::invalid_argument("CriticConfig: channel counts must be positive");
  }
  if (downsample_levels < 1) throw std::invalid_argument("CriticConfig: need at least one downsampling level");
  if (offset_mode != "learned" && offset_mode != "random") {
    throw std::invalid_argument("CriticConfig: offset_mode must be 'learned' or 'random'");
  }
}

Generator::Generator(const GeneratorConfig& config, Rng& init_rng) : config_(config) {
  config_.validate();
  const Dtype dt = config_.dtype;
  const auto& ch = config_.channels;
  const bool norm = config_.norm_kind == "instance";

  auto add_block = [&](const std::string& name, std::int64_t cin, std::int64_t cout) {
    kaiming_conv(params_, name + ".conv1.w", cout, cin, 3, init_rng, dt);
    params_.add(name + ".conv1.b", Tensor::zeros({cout}, dt));
    if (norm) {
      params_.add(name + ".norm1.g", Tensor::ones({cout}, dt));
      params_.add(name + ".norm1.b", Tensor::zeros({cout}, dt));
    }
    kaiming_conv(params_, name + ".conv2.w", cout, cout, 3, init_rng, dt);
    params_.add(name + ".conv2.b", Tensor::zeros({cout}, dt));
    if (norm) {
      params_.add(name + ".norm2.g", Tensor::ones({cout}, dt));
      params_.add(name + ".norm2.b", Tensor::zeros({cout}, dt));
    }
  };

  std::int64_t prev = 1;
  for (int i = 0; i < config_.depth; ++i) {
    add_block("enc" + std::to_string(i), prev, ch[static_cast<std::size_t>(i)]);
    prev = ch[static_cast<std::size_t>(i)];
  }

  // Latent transformer stack.
  const std::int64_t c = ch.back();
  const std::int64_t hidden = c * config_.ctl_mlp_ratio;
  kaiming_linear(params_, "ctl.embed.w", c, c, init_rng, dt);
  params_.add("ctl.embed.b", Tensor::zeros({c}, dt));
  for (int l = 0; l < config_.ctl_layers; ++l) {
    const std::string p = "ctl.layer" + std::to_string(l);
    params_.add(p + ".ln1.g", Tensor::ones({c}, dt));
    params_.add(p + ".ln1.b", Tensor::zeros({c}, dt));
    kaiming_linear(params_, p + ".qkv.w", c, 3 * c, init_rng, dt);
    params_.add(p + ".qkv.b", Tensor::zeros({3 * c}, dt));
    kaiming_linear(params_, p + ".proj.w", c, c, init_rng, dt);
    params_.add(p + ".proj.b", Tensor::zeros({c}, dt));
    params_.add(p + ".ln2.g", Tensor::ones({c}, dt));
    params_.add(p + ".ln2.b", Tensor::zeros({c}, dt));
    kaiming_linear(params_, p + ".mlp1.w", c, hidden, init_rng, dt);
    params_.add(p + ".mlp1.b", Tensor::zeros({hidden}, dt));
    kaiming_linear(params_, p + ".mlp2.w", hidden, c, init_rng, dt);
    params_.add(p + ".mlp2.b", Tensor::zeros({c}, dt));
  }
  params_.add("ctl.final_ln.g", Tensor::ones({c}, dt));
  params_.add("ctl.final_ln.b", Tensor::zeros({c}, dt));
  kaiming_linear(params_, "ctl.final.w", c, c, init_rng, dt);
  params_.add("ctl.final.b", Tensor::zeros({c}, dt));

  for (int i = config_.depth - 2; i >= 0; --i) {
    const std::string p = "dec" + std::to_string(i);
    kaiming_conv(params_, p + ".up.w", ch[static_cast<std::size_t>(i)], ch[static_cast<std::size_t>(i + 1)], 3,
                 init_rng, dt);
    params_.add(p + ".up.b", Tensor::zeros({ch[static_cast<std::size_t>(i)]}, dt));
    add_block(p, 2 * ch[static_cast<std::size_t>(i)], ch[static_cast<std::size_t>(i)]);
  }
  kaiming_conv(params_, "head.w", 1, ch[0], 1, init_rng, dt);
  params_.add("head.b", Tensor::zeros({1}, dt));
}

namespace {

Tensor conv_block(const ParamStore& params, const std::string& name, const Tensor& x, bool norm) {
  Tensor h = conv3d(x, params.at(name + ".conv1.w"), params.at(name + ".conv1.b"), 1, 1);
  if (norm) h = instance_norm3d(h, params.at(name + ".norm1.g"), params.at(name + ".norm1.b"));
  h = relu(h);
  h = conv3d(h, params.at(name + ".conv2.w"), params.at(name + ".conv2.b"), 1, 1);
  if (norm) h = instance_norm3d(h, params.at(name + ".norm2.g"), params.at(name + ".norm2.b"));
  return relu(h);
}

}  // namespace

Tensor Generator::ctl_forward(const Tensor& f_input) const {
  const auto& s = f_input.shape();
  if (s.size() != 5) throw std::invalid_argument("ctl_forward: expected (N,C,H,W,D), got " + shape_str(s));
  const std::int64_t n = s[0], c = s[1];
  const std::int64_t t = s[2] * s[3] * s[4];
  if (c % config_.ctl_heads != 0) {
    throw std::invalid_argument("ctl_forward: channels " + std::to_string(c) + " not divisible by " +
                                std::to_string(config_.ctl_heads) + " heads");
  }
  const std::int64_t heads = config_.ctl_heads;
  const std::int64_t dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // 1x1x1 convolutional embedding == per-voxel linear over channels.
  Tensor tokens = transpose_last2(reshape(f_input, {n, c, t}));  // (N, T, C)
  Tensor f = linear(tokens, params_.at("ctl.embed.w"), params_.at("ctl.embed.b"));

  for (int l = 0; l < config_.ctl_layers; ++l) {
    const std::string p = "ctl.layer" + std::to_string(l);
    Tensor a = layer_norm_lastdim(f, params_.at(p + ".ln1.g"), params_.at(p + ".ln1.b"));
    Tensor qkv = linear(a, params_.at(p + ".qkv.w"), params_.at(p + ".qkv.b"));  // (N, T, 3C)
    Tensor q = narrow(qkv, 2, 0, c);
    Tensor k = narrow(qkv, 2, c, c);
    Tensor v = narrow(qkv, 2, 2 * c, c);
    auto to_heads = [&](const Tensor& m) {
      return permute(reshape(m, {n, t, heads, dh}), {0, 2, 1, 3});  // (N, h, T, dh)
    };
    Tensor qh = to_heads(q), kh = to_heads(k), vh = to_heads(v);
    Tensor scores = mul_scalar(matmul(qh, transpose_last2(kh)), scale);  // (N, h, T, T)
    Tensor attn = softmax_lastdim(scores);
    Tensor ctx = matmul(attn, vh);                                   // (N, h, T, dh)
    Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {n, t, c});  // (N, T, C)
    Tensor mhsa = linear(merged, params_.at(p + ".proj.w"), params_.at(p + ".proj.b"));
    // Residual then norm, then the feed-forward with its own residual.
    Tensor z1 = layer_norm_lastdim(add(mhsa, f), params_.at(p + ".ln2.g"), params_.at(p + ".ln2.b"));
    Tensor mlp = linear(gelu(linear(z1, params_.at(p + ".mlp1.w"), params_.at(p + ".mlp1.b"))),
                        params_.at(p + ".mlp2.w"), params_.at(p + ".mlp2.b"));
    f = add(mlp, z1);
  }

  Tensor out = layer_norm_lastdim(f, params_.at("ctl.final_ln.g"), params_.at("ctl.final_ln.b"));
  out = linear(out, params_.at("ctl.final.w"), params_.at("ctl.final.b"));
  return reshape(transpose_last2(out), s);
}

Tensor Generator::forward(const Tensor& x) const {
  const auto& s = x.shape();
  if (s.size() != 5 || s[1] != 1) {
    throw std::invalid_argument("generator: expected input (N,1,H,W,D), got " + shape_str(s));
  }
  const std::int64_t divisor = std::int64_t(1) << (config_.depth - 1);
  for (int k = 2; k < 5; ++k) {
    if (s[static_cast<std::size_t>(k)] % divisor != 0) {
      throw std::invalid_argument("generator: spatial dims " + shape_str(s) + " must be divisible by 2^(depth-1) = " +
                                  std::to_string(divisor));
    }
  }
  const bool norm = config_.norm_kind == "instance";

  std::vector<Tensor> skips;
  Tensor h = x;
  for (int i = 0; i < config_.depth - 1; ++i) {
    h = conv_block(params_, "enc" + std::to_string(i), h, norm);
    skips.push_back(h);
    h = max_pool3d(h, 2, 2);
  }
  h = conv_block(params_, "enc" + std::to_string(config_.depth - 1), h, norm);
  if (config_.ctl_layers > 0) h = ctl_forward(h);

  for (int i = config_.depth - 2; i >= 0; --i) {
    const std::string p = "dec" + std::to_string(i);
    h = upsample_nearest3d(h, 2);
    h = conv3d(h, params_.at(p + ".up.w"), params_.at(p + ".up.b"), 1, 1);
    h = concat({skips[static_cast<std::size_t>(i)], h}, 1);
    h = conv_block(params_, p, h, norm);
  }
  h = conv3d(h, params_.at("head.w"), params_.at("head.b"), 1, 0);
  if (config_.output_activation == "sigmoid") h = sigmoid(h);
  return h;
}

Critic::Critic(const CriticConfig& config, Rng& init_rng) : config_(config) {
  config_.validate();
  const Dtype dt = config_.dtype;
  const std::int64_t k = config_.dsconv_kernel_len;
  const std::int64_t cin = in_channels_;

  static const char* axis_names[3] = {"d", "h", "w"};
  for (int axis = 0; axis < 3; ++axis) {
    const std::string p = std::string("dsconv.") + axis_names[axis];
    if (config_.offset_mode == "learned") {
      // Offset predictor starts at zero: straight kernels at init.
      params_.add(p + ".offset.w", Tensor::zeros({2 * k, cin, 3, 3, 3}, dt));
      params_.add(p + ".offset.b", Tensor::zeros({2 * k}, dt));
    }
    Tensor w = Tensor::zeros({config_.dsconv_channels, cin, k}, dt);
    const double bound = std::sqrt(6.0 / static_cast<double>(cin * k));
    fill_uniform(w, init_rng, -bound, bound);
    params_.add(p + ".w", w);
    params_.add(p + ".b", Tensor::zeros({config_.dsconv_channels}, dt));
  }
  kaiming_conv(params_, "local.w", config_.conv_channels, cin, 3, init_rng, dt);
  params_.add("local.b", Tensor::zeros({config_.conv_channels}, dt));

  std::int64_t c = 3 * config_.dsconv_channels + config_.conv_channels;
  for (int l = 0; l < config_.downsample_levels; ++l) {
    const std::string p = "down" + std::to_string(l);
    kaiming_conv(params_, p + ".w", 2 * c, c, 3, init_rng, dt);
    params_.add(p + ".b", Tensor::zeros({2 * c}, dt));
    c *= 2;
  }
  kaiming_linear(params_, "score.w", c, 1, init_rng, dt);
  params_.add("score.b", Tensor::zeros({1}, dt));
}

Tensor Critic::dsconv_forward(const Tensor& f, Rng* offset_rng) const {
  const auto& s = f.shape();
  if (s.size() != 5) throw std::invalid_argument("dsconv: expected (N,C,H,W,D), got " + shape_str(s));
  const std::int64_t n = s[0], cin = s[1];
  const std::int64_t dims[3] = {s[2], s[3], s[4]};
  const std::int64_t p = dims[0] * dims[1] * dims[2];
  const std::int64_t k = config_.dsconv_kernel_len;
  const std::int64_t center = (k - 1) / 2;
  const Dtype dt = f.dtype();

  // Base voxel coordinates of every output position, one constant per
  // spatial axis, shaped (N, P, 1).
  Tensor base[3];
  {
    NoGradGuard ng;
    std::vector<double> bd(static_cast<std::size_t>(n * p));
    for (int axis = 0; axis < 3; ++axis) {
      std::size_t i = 0;
      for (std::int64_t nn = 0; nn < n; ++nn)
        for (std::int64_t z = 0; z < dims[0]; ++z)
          for (std::int64_t y = 0; y < dims[1]; ++y)
            for (std::int64_t x = 0; x < dims[2]; ++x, ++i) {
              bd[i] = static_cast<double>(axis == 0 ? z : (axis == 1 ? y : x));
            }
      base[axis] = Tensor::from_vector({n, p, 1}, bd, dt);
    }
  }

  static const char* axis_names[3] = {"d", "h", "w"};
  std::vector<Tensor> axis_maps;
  for (int axis = 0; axis < 3; ++axis) {
    const std::string pname = std::string("dsconv.") + axis_names[axis];

    // Per-tap perpendicular increments, bounded to one voxel per step.
    Tensor inc;  // (N, 2K, P)
    if (config_.offset_mode == "learned") {
      Tensor raw = conv3d(f, params_.at(pname + ".offset.w"), params_.at(pname + ".offset.b"), 1, 1);
      inc = reshape(tanh(raw), {n, 2 * k, p});
    } else {
      if (!offset_rng) throw std::invalid_argument("dsconv: random offset mode needs an rng");
      NoGradGuard ng;
      Tensor r = Tensor::zeros({n, 2 * k, p}, dt);
      if (dt == Dtype::kF32) {
        for (auto& v : r.data_f32()) v = static_cast<float>(offset_rng->uniform(-1.0, 1.0));
      } else {
        for (auto& v : r.data_f64()) v = offset_rng->uniform(-1.0, 1.0);
      }
      inc = r;
    }

    // Cumulative offsets walking outward from the straight center tap.
    std::vector<Tensor> cum1(static_cast<std::size_t>(k)), cum2(static_cast<std::size_t>(k));
    Tensor zero = Tensor::zeros({n, 1, p}, dt);
    cum1[static_cast<std::size_t>(center)] = zero;
    cum2[static_cast<std::size_t>(center)] = zero;
    for (std::int64_t tap = center + 1; tap < k; ++tap) {
      cum1[static_cast<std::size_t>(tap)] = add(cum1[static_cast<std::size_t>(tap - 1)], narrow(inc, 1, 2 * tap, 1));
      cum2[static_cast<std::size_t>(tap)] =
          add(cum2[static_cast<std::size_t>(tap - 1)], narrow(inc, 1, 2 * tap + 1, 1));
    }
    for (std::int64_t tap = center - 1; tap >= 0; --tap) {
      cum1[static_cast<std::size_t>(tap)] = add(cum1[static_cast<std::size_t>(tap + 1)], narrow(inc, 1, 2 * tap, 1));
      cum2[static_cast<std::size_t>(tap)] =
          add(cum2[static_cast<std::size_t>(tap + 1)], narrow(inc, 1, 2 * tap + 1, 1));
    }

    // Sampling grid: along the flattening axis the tap index walks in
    // integer steps; the two perpendicular axes bend by the offsets.
    const int perp[3][2] = {{1, 2}, {0, 2}, {0, 1}};
    std::vector<Tensor> chunks;
    chunks.reserve(static_cast<std::size_t>(k));
    for (std::int64_t tap = 0; tap < k; ++tap) {
      Tensor coords[3];
      coords[axis] = add_scalar(base[axis], static_cast<double>(tap - center));
      coords[perp[axis][0]] = add(base[perp[axis][0]], reshape(cum1[static_cast<std::size_t>(tap)], {n, p, 1}));
      coords[perp[axis][1]] = add(base[perp[axis][1]], reshape(cum2[static_cast<std::size_t>(tap)], {n, p, 1}));
      chunks.push_back(concat({coords[0], coords[1], coords[2]}, 2));  // (N, P, 3)
    }
    Tensor grid = concat(chunks, 1);                        // (N, K*P, 3)
    Tensor samples = grid_sample_trilinear(f, grid);        // (N, Cin, K*P)
    samples = permute(reshape(samples, {n, cin, k, p}), {0, 3, 1, 2});  // (N, P, Cin, K)
    samples = reshape(samples, {n, p, cin * k});
    Tensor w2 = transpose_last2(reshape(params_.at(pname + ".w"), {config_.dsconv_channels, cin * k}));
    Tensor out = add(matmul(samples, w2), params_.at(pname + ".b"));  // (N, P, Cout)
    out = reshape(transpose_last2(out), {n, config_.dsconv_channels, dims[0], dims[1], dims[2]});
    axis_maps.push_back(out);
  }
  return concat(axis_maps, 1);
}

Tensor Critic::forward(const Tensor& y_with_condition, Rng* offset_rng) const {
  const auto& s = y_with_condition.shape();
  if (s.size() != 5 || s[1] != in_channels_) {
    throw std::invalid_argument("critic: expected input (N," + std::to_string(in_channels_) + ",H,W,D), got " +
                                shape_str(s));
  }
  Tensor snake = dsconv_forward(y_with_condition, offset_rng);
  Tensor local = conv3d(y_with_condition, params_.at("local.w"), params_.at("local.b"), 1, 1);
  Tensor h = leaky_relu(concat({snake, local}, 1), config_.leaky_slope);
  for (int l = 0; l < config_.downsample_levels; ++l) {
    const std::string p = "down" + std::to_string(l);
    h = leaky_relu(conv3d(h, params_.at(p + ".w"), params_.at(p + ".b"), 2, 1), config_.leaky_slope);
  }
  const auto& hs = h.shape();
  const std::int64_t spatial = hs[2] * hs[3] * hs[4];
  Tensor pooled = mul_scalar(sum_to(h, {hs[0], hs[1], 1, 1, 1}), 1.0 / static_cast<double>(spatial));
  pooled = reshape(pooled, {hs[0], hs[1]});
  return linear(pooled, params_.at("score.w"), params_.at("score.b"));
}

}  // namespace angio
