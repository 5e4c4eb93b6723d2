#pragma once

#include <optional>
#include <string>
#include <vector>

#include "angio/config.hpp"
#include "angio/metrics.hpp"
#include "angio/pipeline.hpp"

namespace angio {

// Shared CLI options. `seed` overrides the config's master seed, `out_dir`
// overrides the config's output directory.
struct CliCommon {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig resolve_config(const CliCommon& common);

// Deterministic phantom volume for a master seed (the same stream the
// dataset generator uses for a sample's ground truth).
VoxelGrid phantom_from_seed(std::uint64_t seed, const DatasetParams& params);

// ---- orchestration layer (throws on failure) ----

struct SimulateResult {
  std::string manifest_path;
  std::int64_t samples_written = 0;
};
// Dataset mode: generates config.dataset_size samples, writes volumes,
// projections and the JSON manifest under <out>/dataset/.
SimulateResult simulate_dataset(const RunConfig& config);
// Single-phantom mode: simulates one acquisition of the given volume.
SimulateResult simulate_single(const RunConfig& config, const std::string& phantom_stem);

struct TrainResult {
  std::string final_checkpoint;
  std::string train_log_path;
  std::string updates_log_path;
  std::int64_t steps_done = 0;
  double first_l1 = 0;
  double final_l1 = 0;
};
TrainResult train_run(const RunConfig& config, const std::string& resume_checkpoint = {});

struct ReconstructResult {
  std::string raw_stem;
  std::string binary_stem;
};
ReconstructResult reconstruct_file(const std::string& checkpoint_path, const std::string& input_stem,
                                   const std::string& out_dir);

struct EvaluateResult {
  std::string csv_path;
  std::vector<std::pair<std::string, MetricReport>> rows;
};
// mode: "3d" or "reproj". Reconstructions are read from
// <recon_dir>/s<id>_recon_bin (the binarized output of `reconstruct`).
EvaluateResult evaluate_run(const RunConfig& config, const std::string& mode, const std::string& manifest_path,
                            const std::string& recon_dir, const std::string& out_csv);

// ---- CLI entry points (exit codes: 0 ok, 1 validation, 2 runtime) ----

int cmd_phantom(const CliCommon& common);
int cmd_simulate(const CliCommon& common, const std::string& phantom_stem, bool dataset_mode, bool zero_motion);
int cmd_train(const CliCommon& common, const std::string& resume_checkpoint,
              const std::string& manifest_override = {});
int cmd_reconstruct(const CliCommon& common, const std::string& checkpoint, const std::string& input_stem);
int cmd_evaluate(const CliCommon& common, const std::string& mode, const std::string& manifest,
                 const std::string& recon_dir);

}  // namespace angio
