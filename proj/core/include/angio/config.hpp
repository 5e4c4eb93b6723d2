#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "angio/adam.hpp"
#include "angio/model.hpp"
#include "angio/objectives.hpp"
#include "angio/pipeline.hpp"

namespace angio {

// Config (or CLI) validation failure; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
  std::string preset = "desk";  // "desk" | "paper"

  std::array<std::int64_t, 3> volume_dims{32, 32, 32};
  double volume_extent_mm[2] = {90.0, 105.0};
  std::array<std::int64_t, 2> detector_dims{64, 64};
  // Multiplier on the sampled physical pixel pitch; presets keep the
  // detector field of view by scaling pitch inversely with resolution.
  double detector_spacing_scale = 8.0;

  std::int64_t dataset_size = 20;
  std::uint64_t master_seed = 1234;
  std::array<double, 3> split{0.75, 0.15, 0.10};
  bool zero_motion = false;
  PhantomParams phantom;

  GeneratorConfig generator;
  CriticConfig critic;
  LossWeights loss;

  double learning_rate = 1e-4;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;

  std::int64_t batch_size = 2;
  std::int64_t steps = 300;
  std::int64_t checkpoint_every = 100;
  std::string dtype = "f32";

  std::string out_dir = "out";
  std::string dataset_manifest;  // consumed by `train` and `evaluate`

  DatasetParams dataset_params() const;
  AdamConfig adam_config() const;

  // Itemized schema validation; throws ConfigError listing every problem.
  void validate() const;
};

RunConfig preset_config(const std::string& preset);
RunConfig load_config(const std::string& path);
// Parses a config from JSON text; unknown keys are rejected.
RunConfig parse_config_json(const std::string& text);
std::string config_to_json(const RunConfig& config);

}  // namespace angio
