#include "angio/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace angio {

using nlohmann::json;

DatasetParams RunConfig::dataset_params() const {
  DatasetParams p;
  p.count = dataset_size;
  p.volume_dims = volume_dims;
  p.volume_extent_mm[0] = volume_extent_mm[0];
  p.volume_extent_mm[1] = volume_extent_mm[1];
  p.split = split;
  p.phantom = phantom;
  p.acquisition.detector_dims = detector_dims;
  p.acquisition.spacing_scale = detector_spacing_scale;
  p.zero_motion = zero_motion;
  return p;
}

AdamConfig RunConfig::adam_config() const {
  AdamConfig c;
  c.lr = learning_rate;
  c.beta1 = adam_beta1;
  c.beta2 = adam_beta2;
  c.eps = adam_eps;
  return c;
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  auto require = [&](bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  };

  require(preset == "desk" || preset == "paper", "preset: must be 'desk' or 'paper'");
  for (int k = 0; k < 3; ++k) {
    require(volume_dims[static_cast<std::size_t>(k)] >= 4, "volume_dims: each extent must be >= 4");
  }
  require(volume_extent_mm[0] > 0 && volume_extent_mm[1] >= volume_extent_mm[0],
          "volume_extent_mm: need 0 < lo <= hi");
  require(detector_dims[0] >= 4 && detector_dims[1] >= 4, "detector_dims: each extent must be >= 4");
  require(detector_spacing_scale > 0, "detector_spacing_scale: must be positive");
  require(dataset_size >= 10, "dataset_size: must be >= 10");
  const double split_sum = split[0] + split[1] + split[2];
  require(std::abs(split_sum - 1.0) < 1e-9 && split[0] > 0 && split[1] >= 0 && split[2] >= 0,
          "split: fractions must be non-negative and sum to 1");
  require(batch_size >= 1, "batch_size: must be >= 1");
  require(steps >= 1, "steps: must be >= 1");
  require(checkpoint_every >= 1, "checkpoint_every: must be >= 1");
  require(learning_rate > 0, "learning_rate: must be positive");
  require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, "adam betas: must be in [0,1)");
  require(adam_eps > 0, "adam_eps: must be positive");
  require(dtype == "f32" || dtype == "f64", "dtype: must be 'f32' or 'f64'");
  require(!out_dir.empty(), "out_dir: must not be empty");
  require(loss.lambda_gp > 0 && loss.lambda_l1 > 0 && loss.critic_iters_per_gen >= 1,
          "loss: lambda_gp, lambda_l1, critic_iters_per_gen must be positive");

  try {
    generator.validate();
  } catch (const std::exception& e) {
    errors.push_back(std::string("generator: ") + e.what());
  }
  try {
    critic.validate();
  } catch (const std::exception& e) {
    errors.push_back(std::string("critic: ") + e.what());
  }
  const std::int64_t divisor = std::int64_t(1) << (generator.depth - 1);
  for (int k = 0; k < 3; ++k) {
    require(volume_dims[static_cast<std::size_t>(k)] % divisor == 0,
            "volume_dims: must be divisible by 2^(generator.depth-1) = " + std::to_string(divisor));
  }

  if (!errors.empty()) {
    std::ostringstream os;
    os << "invalid configuration (" << errors.size() << " problem" << (errors.size() > 1 ? "s" : "") << "):";
    for (const auto& e : errors) os << "\n  - " << e;
    throw ConfigError(os.str());
  }
}

RunConfig preset_config(const std::string& preset) {
  RunConfig c;
  if (preset == "desk") {
    c.preset = "desk";
    // Defaults above are the desk preset.
  } else if (preset == "paper") {
    c.preset = "paper";
    c.volume_dims = {128, 128, 128};
    c.detector_dims = {512, 512};
    c.detector_spacing_scale = 1.0;
    c.dataset_size = 879;
    c.batch_size = 3;
    c.steps = 20000;
    c.checkpoint_every = 1000;
    c.generator.depth = 4;
    c.generator.channels = {16, 32, 64, 128};
    c.critic.dsconv_channels = 16;
    c.critic.conv_channels = 16;
    c.critic.downsample_levels = 4;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected 'desk' or 'paper')");
  }
  return c;
}

namespace {

void check_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& scope,
                        std::vector<std::string>& errors) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) errors.push_back(scope + ": unknown key '" + key + "'");
  }
}

}  // namespace

RunConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  std::vector<std::string> errors;

  RunConfig c = preset_config(j.value("preset", "desk"));

  check_unknown_keys(j,
                     {"preset", "volume", "detector", "dataset", "generator", "critic", "loss", "optim", "train",
                      "out_dir"},
                     "config", errors);

  try {
    if (j.contains("volume")) {
      const auto& v = j.at("volume");
      check_unknown_keys(v, {"dims", "extent_mm"}, "volume", errors);
      if (v.contains("dims")) c.volume_dims = v.at("dims").get<std::array<std::int64_t, 3>>();
      if (v.contains("extent_mm")) {
        const auto e = v.at("extent_mm").get<std::array<double, 2>>();
        c.volume_extent_mm[0] = e[0];
        c.volume_extent_mm[1] = e[1];
      }
    }
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      check_unknown_keys(d, {"dims", "spacing_scale"}, "detector", errors);
      if (d.contains("dims")) c.detector_dims = d.at("dims").get<std::array<std::int64_t, 2>>();
      if (d.contains("spacing_scale")) c.detector_spacing_scale = d.at("spacing_scale").get<double>();
    }
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_unknown_keys(d, {"size", "seed", "split", "zero_motion", "manifest", "phantom_branches"}, "dataset",
                         errors);
      if (d.contains("size")) c.dataset_size = d.at("size").get<std::int64_t>();
      if (d.contains("seed")) c.master_seed = d.at("seed").get<std::uint64_t>();
      if (d.contains("split")) c.split = d.at("split").get<std::array<double, 3>>();
      if (d.contains("zero_motion")) c.zero_motion = d.at("zero_motion").get<bool>();
      if (d.contains("manifest")) c.dataset_manifest = d.at("manifest").get<std::string>();
      if (d.contains("phantom_branches")) c.phantom.branch_count = d.at("phantom_branches").get<int>();
    }
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      check_unknown_keys(g, {"depth", "channels", "ctl_layers", "ctl_heads", "ctl_mlp_ratio", "norm", "output_activation"},
                         "generator", errors);
      if (g.contains("depth")) c.generator.depth = g.at("depth").get<int>();
      if (g.contains("channels")) c.generator.channels = g.at("channels").get<std::vector<std::int64_t>>();
      if (g.contains("ctl_layers")) c.generator.ctl_layers = g.at("ctl_layers").get<int>();
      if (g.contains("ctl_heads")) c.generator.ctl_heads = g.at("ctl_heads").get<int>();
      if (g.contains("ctl_mlp_ratio")) c.generator.ctl_mlp_ratio = g.at("ctl_mlp_ratio").get<int>();
      if (g.contains("norm")) c.generator.norm_kind = g.at("norm").get<std::string>();
      if (g.contains("output_activation")) c.generator.output_activation = g.at("output_activation").get<std::string>();
    }
    if (j.contains("critic")) {
      const auto& cr = j.at("critic");
      check_unknown_keys(
          cr, {"dsconv_kernel_len", "dsconv_channels", "conv_channels", "downsample_levels", "offset_mode"},
          "critic", errors);
      if (cr.contains("dsconv_kernel_len")) c.critic.dsconv_kernel_len = cr.at("dsconv_kernel_len").get<std::int64_t>();
      if (cr.contains("dsconv_channels")) c.critic.dsconv_channels = cr.at("dsconv_channels").get<std::int64_t>();
      if (cr.contains("conv_channels")) c.critic.conv_channels = cr.at("conv_channels").get<std::int64_t>();
      if (cr.contains("downsample_levels")) c.critic.downsample_levels = cr.at("downsample_levels").get<int>();
      if (cr.contains("offset_mode")) c.critic.offset_mode = cr.at("offset_mode").get<std::string>();
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      check_unknown_keys(l, {"lambda_gp", "lambda_l1", "critic_iters", "gp_both_channels"}, "loss", errors);
      if (l.contains("lambda_gp")) c.loss.lambda_gp = l.at("lambda_gp").get<double>();
      if (l.contains("lambda_l1")) c.loss.lambda_l1 = l.at("lambda_l1").get<double>();
      if (l.contains("critic_iters")) c.loss.critic_iters_per_gen = l.at("critic_iters").get<int>();
      if (l.contains("gp_both_channels")) c.loss.gp_both_channels = l.at("gp_both_channels").get<bool>();
    }
    if (j.contains("optim")) {
      const auto& o = j.at("optim");
      check_unknown_keys(o, {"lr", "beta1", "beta2", "eps"}, "optim", errors);
      if (o.contains("lr")) c.learning_rate = o.at("lr").get<double>();
      if (o.contains("beta1")) c.adam_beta1 = o.at("beta1").get<double>();
      if (o.contains("beta2")) c.adam_beta2 = o.at("beta2").get<double>();
      if (o.contains("eps")) c.adam_eps = o.at("eps").get<double>();
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_unknown_keys(t, {"batch_size", "steps", "checkpoint_every", "dtype"}, "train", errors);
      if (t.contains("batch_size")) c.batch_size = t.at("batch_size").get<std::int64_t>();
      if (t.contains("steps")) c.steps = t.at("steps").get<std::int64_t>();
      if (t.contains("checkpoint_every")) c.checkpoint_every = t.at("checkpoint_every").get<std::int64_t>();
      if (t.contains("dtype")) c.dtype = t.at("dtype").get<std::string>();
    }
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config field type error: ") + e.what());
  }

  if (!errors.empty()) {
    std::ostringstream os;
    os << "invalid configuration (" << errors.size() << " problem" << (errors.size() > 1 ? "s" : "") << "):";
    for (const auto& e : errors) os << "\n  - " << e;
    throw ConfigError(os.str());
  }

  c.generator.dtype = dtype_from_name(c.dtype);
  c.critic.dtype = c.generator.dtype;
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_json(os.str());
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["volume"] = {{"dims", c.volume_dims}, {"extent_mm", std::array<double, 2>{c.volume_extent_mm[0], c.volume_extent_mm[1]}}};
  j["detector"] = {{"dims", c.detector_dims}, {"spacing_scale", c.detector_spacing_scale}};
  j["dataset"] = {{"size", c.dataset_size},       {"seed", c.master_seed},
                  {"split", c.split},             {"zero_motion", c.zero_motion},
                  {"manifest", c.dataset_manifest}, {"phantom_branches", c.phantom.branch_count}};
  j["generator"] = {{"depth", c.generator.depth},
                    {"channels", c.generator.channels},
                    {"ctl_layers", c.generator.ctl_layers},
                    {"ctl_heads", c.generator.ctl_heads},
                    {"ctl_mlp_ratio", c.generator.ctl_mlp_ratio},
                    {"norm", c.generator.norm_kind},
                    {"output_activation", c.generator.output_activation}};
  j["critic"] = {{"dsconv_kernel_len", c.critic.dsconv_kernel_len},
                 {"dsconv_channels", c.critic.dsconv_channels},
                 {"conv_channels", c.critic.conv_channels},
                 {"downsample_levels", c.critic.downsample_levels},
                 {"offset_mode", c.critic.offset_mode}};
  j["loss"] = {{"lambda_gp", c.loss.lambda_gp},
               {"lambda_l1", c.loss.lambda_l1},
               {"critic_iters", c.loss.critic_iters_per_gen},
               {"gp_both_channels", c.loss.gp_both_channels}};
  j["optim"] = {{"lr", c.learning_rate}, {"beta1", c.adam_beta1}, {"beta2", c.adam_beta2}, {"eps", c.adam_eps}};
  j["train"] = {{"batch_size", c.batch_size},
                {"steps", c.steps},
                {"checkpoint_every", c.checkpoint_every},
                {"dtype", c.dtype}};
  j["out_dir"] = c.out_dir;
  return j.dump(2);
}

}  // namespace angio
