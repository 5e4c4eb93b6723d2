#include <optional>
#include <string>

#include "CLI11.hpp"
#include "angio/run.hpp"

namespace {

void add_common(CLI::App* cmd, angio::CliCommon& common, std::optional<std::uint64_t>& seed) {
  cmd->add_option("--config", common.config_path, "Path to the JSON run configuration");
  cmd->add_option("--preset", common.preset, "Built-in configuration preset")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", seed, "Master seed override");
  cmd->add_option("--out", common.out_dir, "Output directory override");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-view cone-beam vessel reconstruction toolkit"};
  app.require_subcommand(1);

  angio::CliCommon common;
  std::optional<std::uint64_t> seed;

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic vessel-tree volume");
  add_common(phantom, common, seed);

  auto* simulate = app.add_subcommand("simulate", "Simulate two-plane acquisitions and model inputs");
  add_common(simulate, common, seed);
  std::string phantom_stem;
  bool dataset_mode = false;
  bool zero_motion = false;
  simulate->add_option("--phantom", phantom_stem, "Volume stem to project (single-sample mode)");
  simulate->add_flag("--dataset", dataset_mode, "Generate the full dataset from the configuration");
  simulate->add_flag("--zero-motion", zero_motion, "Disable the inter-acquisition motion");

  auto* train = app.add_subcommand("train", "Train the reconstruction model on a simulated dataset");
  add_common(train, common, seed);
  std::string resume;
  train->add_option("--resume", resume, "Checkpoint to resume from");
  std::string manifest_override;
  train->add_option("--manifest", manifest_override, "Dataset manifest (overrides config dataset.manifest)");

  auto* reconstruct = app.add_subcommand("reconstruct", "Run the generator on a model-input volume");
  add_common(reconstruct, common, seed);
  std::string checkpoint, input_stem;
  reconstruct->add_option("--checkpoint", checkpoint, "Trained checkpoint file")->required();
  reconstruct->add_option("--input", input_stem, "Model-input volume stem")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score reconstructions against references");
  add_common(evaluate, common, seed);
  std::string mode = "3d", eval_manifest, recon_dir;
  evaluate->add_option("--mode", mode, "3d or reproj")->check(CLI::IsMember({"3d", "reproj"}));
  evaluate->add_option("--manifest", eval_manifest, "Dataset manifest with the test split")->required();
  evaluate->add_option("--recon-dir", recon_dir, "Directory holding s####_recon_bin volumes")->required();

  CLI11_PARSE(app, argc, argv);
  common.seed = seed;

  if (phantom->parsed()) return angio::cmd_phantom(common);
  if (simulate->parsed()) return angio::cmd_simulate(common, phantom_stem, dataset_mode, zero_motion);
  if (train->parsed()) return angio::cmd_train(common, resume, manifest_override);
  if (reconstruct->parsed()) return angio::cmd_reconstruct(common, checkpoint, input_stem);
  if (evaluate->parsed()) return angio::cmd_evaluate(common, mode, eval_manifest, recon_dir);
  return 1;
}
