#include "angio/run.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "angio/checkpoint.hpp"
#include "angio/objectives.hpp"
#include "angio/volume_io.hpp"
#include "json.hpp"

namespace angio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

json geometry_to_json(const ProjectionGeometry& g) {
  return {{"dsd_mm", g.dsd_mm},
          {"dso_mm", g.dso_mm},
          {"primary_deg", g.primary_deg},
          {"secondary_deg", g.secondary_deg},
          {"detector_dims", g.detector_dims},
          {"detector_spacing_mm", g.detector_spacing_mm}};
}

ProjectionGeometry geometry_from_json(const json& j) {
  ProjectionGeometry g;
  g.dsd_mm = j.at("dsd_mm").get<double>();
  g.dso_mm = j.at("dso_mm").get<double>();
  g.primary_deg = j.at("primary_deg").get<double>();
  g.secondary_deg = j.at("secondary_deg").get<double>();
  g.detector_dims = j.at("detector_dims").get<std::array<std::int64_t, 2>>();
  g.detector_spacing_mm = j.at("detector_spacing_mm").get<std::array<double, 2>>();
  return g;
}

json motion_to_json(const RigidTransform& t) {
  return {{"rot_primary_deg", t.rot_primary_deg},
          {"rot_secondary_deg", t.rot_secondary_deg},
          {"tx_mm", t.tx_mm},
          {"ty_mm", t.ty_mm}};
}

RigidTransform motion_from_json(const json& j) {
  RigidTransform t;
  t.rot_primary_deg = j.at("rot_primary_deg").get<double>();
  t.rot_secondary_deg = j.at("rot_secondary_deg").get<double>();
  t.tx_mm = j.at("tx_mm").get<double>();
  t.ty_mm = j.at("ty_mm").get<double>();
  return t;
}

void write_run_record(const RunConfig& config, const std::string& command) {
  fs::create_directories(config.out_dir);
  json record;
  record["command"] = command;
  record["seed"] = config.master_seed;
  record["config"] = json::parse(config_to_json(config));
  std::ofstream out(fs::path(config.out_dir) / "run.json");
  out << record.dump(2) << "\n";
}

Tensor volume_to_tensor(const VoxelGrid& v, Dtype dtype) {
  // (1, 1, D, H, W) with D = z, H = y, W = x; the grid's x-fastest layout
  // maps straight onto the tensor's row-major order.
  return Tensor::from_vector({1, 1, v.dims[2], v.dims[1], v.dims[0]}, v.values, dtype);
}

VoxelGrid tensor_to_volume(const Tensor& t, const std::array<double, 3>& extent_mm) {
  const auto& s = t.shape();
  VoxelGrid v = VoxelGrid::zeros({s[4], s[3], s[2]}, extent_mm);
  v.values = t.to_vector();
  return v;
}

Tensor stack_batch(const std::vector<const VoxelGrid*>& volumes, Dtype dtype) {
  const auto& d = volumes.front()->dims;
  Shape shape{static_cast<std::int64_t>(volumes.size()), 1, d[2], d[1], d[0]};
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(shape_numel(shape)));
  for (const auto* v : volumes) data.insert(data.end(), v->values.begin(), v->values.end());
  return Tensor::from_vector(shape, data, dtype);
}

struct LoadedSample {
  std::int64_t sample_id;
  std::string split;
  VoxelGrid input;
  VoxelGrid ground_truth;
  std::string proj1_stem;
  std::string proj2_stem;
  ProjectionGeometry geom1;
  ProjectionGeometry geom2;
  RigidTransform motion;
};

struct LoadedManifest {
  fs::path dir;
  json raw;
  std::vector<LoadedSample> samples;  // volumes loaded lazily per split
};

LoadedManifest load_manifest(const std::string& manifest_path, const std::string& split_filter,
                             bool load_volumes) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open dataset manifest " + manifest_path);
  LoadedManifest m;
  in >> m.raw;
  m.dir = fs::path(manifest_path).parent_path();
  for (const auto& sj : m.raw.at("samples")) {
    const std::string split = sj.at("split").get<std::string>();
    if (!split_filter.empty() && split != split_filter) continue;
    LoadedSample s;
    s.sample_id = sj.at("sample_id").get<std::int64_t>();
    s.split = split;
    s.proj1_stem = (m.dir / sj.at("files").at("proj1").get<std::string>()).string();
    s.proj2_stem = (m.dir / sj.at("files").at("proj2").get<std::string>()).string();
    s.geom1 = geometry_from_json(sj.at("geom1"));
    s.geom2 = geometry_from_json(sj.at("geom2"));
    s.motion = motion_from_json(sj.at("motion"));
    if (load_volumes) {
      s.input = read_volume((m.dir / sj.at("files").at("input").get<std::string>()).string());
      s.ground_truth = read_volume((m.dir / sj.at("files").at("ground_truth").get<std::string>()).string());
    }
    m.samples.push_back(std::move(s));
  }
  return m;
}

std::string sample_tag(std::int64_t id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04lld", static_cast<long long>(id));
  return buf;
}

void write_sample_files(const fs::path& dataset_dir, const TrainingSample& s, json& manifest_samples,
                        const std::string& split) {
  const std::string tag = sample_tag(s.sample_id);
  const fs::path sample_dir = dataset_dir / "samples";
  fs::create_directories(sample_dir);
  write_volume((sample_dir / (tag + "_input")).string(), s.input);
  write_volume((sample_dir / (tag + "_gt")).string(), s.ground_truth);
  write_detector_image((sample_dir / (tag + "_proj1")).string(), s.proj1);
  write_detector_image((sample_dir / (tag + "_proj2")).string(), s.proj2);
  write_pgm16((sample_dir / (tag + "_proj1.pgm")).string(), s.proj1);
  write_pgm16((sample_dir / (tag + "_proj2.pgm")).string(), s.proj2);

  json sj;
  sj["sample_id"] = s.sample_id;
  sj["split"] = split;
  sj["seed"] = s.seed;
  sj["extent_mm"] = s.ground_truth.extent_mm;
  sj["files"] = {{"input", "samples/" + tag + "_input"},
                 {"ground_truth", "samples/" + tag + "_gt"},
                 {"proj1", "samples/" + tag + "_proj1"},
                 {"proj2", "samples/" + tag + "_proj2"}};
  sj["geom1"] = geometry_to_json(s.geom1);
  sj["geom2"] = geometry_to_json(s.geom2);
  sj["motion"] = motion_to_json(s.motion);
  manifest_samples.push_back(sj);
}

}  // namespace

RunConfig resolve_config(const CliCommon& common) {
  RunConfig config = common.config_path.empty() ? preset_config(common.preset) : load_config(common.config_path);
  if (common.seed) config.master_seed = *common.seed;
  if (!common.out_dir.empty()) config.out_dir = common.out_dir;
  config.validate();
  return config;
}

VoxelGrid phantom_from_seed(std::uint64_t seed, const DatasetParams& params) {
  Rng rng(derive_seed(seed, "phantom"));
  const double extent = rng.uniform(params.volume_extent_mm[0], params.volume_extent_mm[1]);
  return generate_phantom(rng, params.volume_dims, {extent, extent, extent}, params.phantom);
}

SimulateResult simulate_dataset(const RunConfig& config) {
  const Dataset dataset = make_dataset(config.master_seed, config.dataset_params());
  const fs::path dataset_dir = fs::path(config.out_dir) / "dataset";
  fs::create_directories(dataset_dir);

  json manifest;
  manifest["master_seed"] = config.master_seed;
  manifest["volume_dims"] = config.volume_dims;
  manifest["count"] = config.dataset_size;
  manifest["samples"] = json::array();
  for (const auto& s : dataset.train) write_sample_files(dataset_dir, s, manifest["samples"], "train");
  for (const auto& s : dataset.val) write_sample_files(dataset_dir, s, manifest["samples"], "val");
  for (const auto& s : dataset.test) write_sample_files(dataset_dir, s, manifest["samples"], "test");

  const fs::path manifest_path = dataset_dir / "manifest.json";
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing manifest " + manifest_path.string());
  return {manifest_path.string(), static_cast<std::int64_t>(dataset.size())};
}

SimulateResult simulate_single(const RunConfig& config, const std::string& phantom_stem) {
  const VoxelGrid phantom = read_volume(phantom_stem);
  DatasetParams params = config.dataset_params();

  Rng rng_geom(derive_seed(config.master_seed, "acquisition"));
  Rng rng_motion(derive_seed(config.master_seed, "motion"));
  auto [geom1, geom2] = sample_acquisition(rng_geom, params.acquisition);
  const RigidTransform motion = config.zero_motion ? RigidTransform{} : sample_motion(rng_motion, params.motion);

  TrainingSample s;
  s.sample_id = 0;
  s.seed = config.master_seed;
  s.ground_truth = binarize(phantom, 0.0);
  s.geom1 = geom1;
  s.geom2 = geom2;
  s.motion = motion;
  auto [p1, p2] = simulate_pair(s.ground_truth, geom1, geom2, motion);
  s.proj1 = std::move(p1);
  s.proj2 = std::move(p2);
  s.input = build_model_input(s.proj1, s.proj2, geom1, geom2, phantom.dims, phantom.extent_mm);

  const fs::path dataset_dir = fs::path(config.out_dir) / "single";
  fs::create_directories(dataset_dir);
  json manifest;
  manifest["master_seed"] = config.master_seed;
  manifest["volume_dims"] = phantom.dims;
  manifest["count"] = 1;
  manifest["samples"] = json::array();
  write_sample_files(dataset_dir, s, manifest["samples"], "test");
  const fs::path manifest_path = dataset_dir / "manifest.json";
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << "\n";
  return {manifest_path.string(), 1};
}

namespace {

struct TrainContext {
  RunConfig config;
  Generator* gen = nullptr;
  Critic* critic = nullptr;
  TrainState* state = nullptr;
  Rng* shuffle_rng = nullptr;
  std::vector<std::size_t> epoch_order;
  std::size_t cursor = 0;
};

json adam_extra(const AdamState& st) { return {{"step", st.step}}; }

void save_train_checkpoint(const std::string& path, const TrainContext& ctx, std::int64_t step) {
  Checkpoint ckpt;
  for (const auto& [name, t] : ctx.gen->params().items) ckpt.tensors.emplace_back("gen." + name, t);
  for (const auto& [name, t] : ctx.critic->params().items) ckpt.tensors.emplace_back("critic." + name, t);
  auto dump_adam = [&](const std::string& prefix, const AdamState& st) {
    for (std::size_t i = 0; i < st.m.size(); ++i) {
      ckpt.tensors.emplace_back(prefix + ".m." + std::to_string(i), st.m[i]);
      ckpt.tensors.emplace_back(prefix + ".v." + std::to_string(i), st.v[i]);
    }
  };
  dump_adam("opt.gen", ctx.state->gen_adam);
  dump_adam("opt.critic", ctx.state->critic_adam);

  json extra;
  extra["step"] = step;
  extra["config"] = json::parse(config_to_json(ctx.config));
  extra["critic_updates"] = ctx.state->critic_updates;
  extra["generator_updates"] = ctx.state->generator_updates;
  extra["adam_gen"] = adam_extra(ctx.state->gen_adam);
  extra["adam_critic"] = adam_extra(ctx.state->critic_adam);
  extra["rng_eps"] = ctx.state->eps_rng.state();
  extra["rng_offset"] = ctx.state->offset_rng.state();
  extra["rng_shuffle"] = ctx.shuffle_rng->state();
  extra["epoch_order"] = ctx.epoch_order;
  extra["cursor"] = ctx.cursor;
  ckpt.extra_json = extra.dump();
  save_checkpoint(path, ckpt);
}

}  // namespace

TrainResult train_run(const RunConfig& config, const std::string& resume_checkpoint) {
  config.validate();
  if (config.dataset_manifest.empty()) {
    throw ConfigError("train: config needs dataset.manifest pointing at a simulate output");
  }
  LoadedManifest train_manifest = load_manifest(config.dataset_manifest, "train", true);
  LoadedManifest val_manifest = load_manifest(config.dataset_manifest, "val", true);
  if (train_manifest.samples.empty()) throw std::runtime_error("train: manifest has no training samples");

  const Dtype dtype = dtype_from_name(config.dtype);
  GeneratorConfig gen_cfg = config.generator;
  CriticConfig critic_cfg = config.critic;
  gen_cfg.dtype = dtype;
  critic_cfg.dtype = dtype;

  Rng init_gen(derive_seed(config.master_seed, "init.gen"));
  Rng init_critic(derive_seed(config.master_seed, "init.critic"));
  Generator gen(gen_cfg, init_gen);
  Critic critic(critic_cfg, init_critic);

  TrainState state;
  state.generator = &gen;
  state.critic = &critic;
  state.gen_optim = config.adam_config();
  state.critic_optim = config.adam_config();
  state.eps_rng = Rng(derive_seed(config.master_seed, "train.eps"));
  state.offset_rng = Rng(derive_seed(config.master_seed, "train.offset"));
  Rng shuffle_rng(derive_seed(config.master_seed, "train.shuffle"));

  TrainContext ctx;
  ctx.config = config;
  ctx.gen = &gen;
  ctx.critic = &critic;
  ctx.state = &state;
  ctx.shuffle_rng = &shuffle_rng;

  std::int64_t start_step = 0;
  if (!resume_checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_checkpoint);
    json extra = json::parse(ckpt.extra_json);
    std::vector<std::pair<std::string, Tensor>> gen_tensors, critic_tensors;
    for (const auto& [name, t] : ckpt.tensors) {
      if (name.rfind("gen.", 0) == 0) gen_tensors.emplace_back(name.substr(4), t);
      if (name.rfind("critic.", 0) == 0) critic_tensors.emplace_back(name.substr(7), t);
    }
    load_params(gen.params(), gen_tensors);
    load_params(critic.params(), critic_tensors);
    auto load_adam = [&](const std::string& prefix, AdamState& st, const ParamStore& params) {
      st.ensure_initialized(params.tensors());
      for (std::size_t i = 0; i < st.m.size(); ++i) {
        const Tensor* m = ckpt.find(prefix + ".m." + std::to_string(i));
        const Tensor* v = ckpt.find(prefix + ".v." + std::to_string(i));
        if (!m || !v) throw std::runtime_error("resume: optimizer state missing in checkpoint");
        st.m[i] = m->detach();
        st.v[i] = v->detach();
      }
    };
    load_adam("opt.gen", state.gen_adam, gen.params());
    load_adam("opt.critic", state.critic_adam, critic.params());
    state.gen_adam.step = extra.at("adam_gen").at("step").get<std::int64_t>();
    state.critic_adam.step = extra.at("adam_critic").at("step").get<std::int64_t>();
    state.critic_updates = extra.at("critic_updates").get<std::int64_t>();
    state.generator_updates = extra.at("generator_updates").get<std::int64_t>();
    state.eps_rng.set_state(extra.at("rng_eps").get<std::string>());
    state.offset_rng.set_state(extra.at("rng_offset").get<std::string>());
    shuffle_rng.set_state(extra.at("rng_shuffle").get<std::string>());
    ctx.epoch_order = extra.at("epoch_order").get<std::vector<std::size_t>>();
    ctx.cursor = extra.at("cursor").get<std::size_t>();
    start_step = extra.at("step").get<std::int64_t>();
  }

  fs::create_directories(fs::path(config.out_dir) / "checkpoints");
  std::ofstream train_log(fs::path(config.out_dir) / "train_log.csv",
                          resume_checkpoint.empty() ? std::ios::trunc : std::ios::app);
  std::ofstream updates_log(fs::path(config.out_dir) / "updates_log.csv",
                            resume_checkpoint.empty() ? std::ios::trunc : std::ios::app);
  std::ofstream val_log(fs::path(config.out_dir) / "val_log.csv",
                        resume_checkpoint.empty() ? std::ios::trunc : std::ios::app);
  if (resume_checkpoint.empty()) {
    train_log << "step,critic_loss,gen_loss,w_estimate,gp,l1\n";
    updates_log << "step,role,loss\n";
    val_log << "epoch,val_l1\n";
  }

  const auto& samples = train_manifest.samples;
  auto next_batch = [&]() {
    std::vector<const VoxelGrid*> inputs, truths;
    for (std::int64_t b = 0; b < config.batch_size; ++b) {
      if (ctx.cursor >= ctx.epoch_order.size()) {
        ctx.epoch_order.resize(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) ctx.epoch_order[i] = i;
        shuffle_rng.shuffle(ctx.epoch_order);
        ctx.cursor = 0;
      }
      const auto& s = samples[ctx.epoch_order[ctx.cursor++]];
      inputs.push_back(&s.input);
      truths.push_back(&s.ground_truth);
    }
    Batch batch;
    batch.input = stack_batch(inputs, dtype);
    batch.ground_truth = stack_batch(truths, dtype);
    return batch;
  };

  auto val_l1 = [&]() {
    if (val_manifest.samples.empty()) return 0.0;
    NoGradGuard ng;
    double total = 0;
    for (const auto& s : val_manifest.samples) {
      Tensor x = volume_to_tensor(s.input, dtype);
      Tensor y = volume_to_tensor(s.ground_truth, dtype);
      total += mean_all(abs(sub(y, gen.forward(x)))).item();
    }
    return total / static_cast<double>(val_manifest.samples.size());
  };

  TrainResult result;
  result.train_log_path = (fs::path(config.out_dir) / "train_log.csv").string();
  result.updates_log_path = (fs::path(config.out_dir) / "updates_log.csv").string();
  const std::int64_t steps_per_epoch =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(samples.size()) / config.batch_size);
  std::string last_checkpoint;

  for (std::int64_t step = start_step; step < config.steps; ++step) {
    Batch batch = next_batch();
    StepScalars scalars;
    try {
      scalars = train_step(state, batch, config.loss);
    } catch (const std::exception& e) {
      // Keep the last good checkpoint and surface the failure.
      throw std::runtime_error(std::string("training halted at step ") + std::to_string(step) + ": " + e.what() +
                               (last_checkpoint.empty() ? "" : "; last checkpoint: " + last_checkpoint));
    }
    const std::int64_t step1 = step + 1;
    train_log << step1 << "," << fmt_double(scalars.critic_loss) << "," << fmt_double(scalars.gen_loss) << ","
              << fmt_double(scalars.w_estimate) << "," << fmt_double(scalars.gp) << "," << fmt_double(scalars.l1)
              << "\n";
    for (const auto& [role, loss] : scalars.updates) {
      updates_log << step1 << "," << (role == 'c' ? "critic" : "generator") << "," << fmt_double(loss) << "\n";
    }
    if (step == start_step) result.first_l1 = scalars.l1;
    result.final_l1 = scalars.l1;

    if (step1 % steps_per_epoch == 0) {
      val_log << (step1 / steps_per_epoch) << "," << fmt_double(val_l1()) << "\n";
    }
    if (step1 % config.checkpoint_every == 0 || step1 == config.steps) {
      const std::string path =
          (fs::path(config.out_dir) / "checkpoints" / ("ckpt_" + std::to_string(step1) + ".bin")).string();
      save_train_checkpoint(path, ctx, step1);
      last_checkpoint = path;
    }
    result.steps_done = step1;
  }

  const std::string final_path = (fs::path(config.out_dir) / "checkpoints" / "ckpt_final.bin").string();
  save_train_checkpoint(final_path, ctx, result.steps_done);
  result.final_checkpoint = final_path;
  return result;
}

ReconstructResult reconstruct_file(const std::string& checkpoint_path, const std::string& input_stem,
                                   const std::string& out_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const json extra = json::parse(ckpt.extra_json);
  const RunConfig config = parse_config_json(extra.at("config").dump());
  const Dtype dtype = dtype_from_name(config.dtype);
  GeneratorConfig gen_cfg = config.generator;
  gen_cfg.dtype = dtype;

  Rng dummy(0);
  Generator gen(gen_cfg, dummy);
  std::vector<std::pair<std::string, Tensor>> gen_tensors;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("gen.", 0) == 0) gen_tensors.emplace_back(name.substr(4), t);
  }
  load_params(gen.params(), gen_tensors);

  const VoxelGrid input = read_volume(input_stem);
  Tensor x = volume_to_tensor(input, dtype);
  Tensor yhat;
  {
    NoGradGuard ng;
    yhat = gen.forward(x);
  }
  VoxelGrid recon = tensor_to_volume(yhat, input.extent_mm);
  const VoxelGrid recon_bin = binarize(recon, 0.5);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(input_stem).filename().string();
  ReconstructResult result;
  result.raw_stem = (fs::path(out_dir) / (stem + "_recon_raw")).string();
  result.binary_stem = (fs::path(out_dir) / (stem + "_recon_bin")).string();
  write_volume(result.raw_stem, recon);
  write_volume(result.binary_stem, recon_bin);
  return result;
}

EvaluateResult evaluate_run(const RunConfig& config, const std::string& mode, const std::string& manifest_path,
                            const std::string& recon_dir, const std::string& out_csv) {
  if (mode != "3d" && mode != "reproj") throw ConfigError("evaluate: mode must be '3d' or 'reproj'");
  LoadedManifest manifest = load_manifest(manifest_path, "test", true);
  if (manifest.samples.empty()) throw std::runtime_error("evaluate: manifest has no test samples");

  EvaluateResult result;
  for (const auto& s : manifest.samples) {
    const std::string tag = sample_tag(s.sample_id);
    const std::string recon_stem = (fs::path(recon_dir) / (tag + "_recon_bin")).string();
    const VoxelGrid recon = read_volume(recon_stem);
    if (mode == "3d") {
      MetricReport report = evaluate_3d(s.ground_truth, recon);
      result.rows.emplace_back(tag, report);
    } else {
      const DetectorImage ref1 = read_detector_image(s.proj1_stem);
      const DetectorImage ref2 = read_detector_image(s.proj2_stem);
      const auto reports = evaluate_reprojection(recon, {ref1, ref2}, {s.geom1, s.geom2});
      for (const auto& r : reports) {
        if (r.geometry_warning) {
          std::cerr << "warning: " << tag << " plane " << r.plane
                    << " dice below sanity floor; check geometry pairing\n";
        }
        result.rows.emplace_back(tag, r);
      }
    }
  }
  fs::create_directories(fs::path(out_csv).parent_path());
  std::ofstream out(out_csv);
  out << metrics_csv(result.rows);
  if (!out) throw std::runtime_error("failed writing " + out_csv);
  result.csv_path = out_csv;
  return result;
}

namespace {

int guarded(const std::string& command, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int cmd_phantom(const CliCommon& common) {
  return guarded("phantom", [&] {
    const RunConfig config = resolve_config(common);
    write_run_record(config, "phantom");
    const VoxelGrid phantom = phantom_from_seed(config.master_seed, config.dataset_params());
    const std::string stem =
        (fs::path(config.out_dir) / ("phantom_" + std::to_string(config.master_seed))).string();
    write_volume(stem, phantom);
    std::cout << stem << ".raw\n";
  });
}

int cmd_simulate(const CliCommon& common, const std::string& phantom_stem, bool dataset_mode, bool zero_motion) {
  return guarded("simulate", [&] {
    RunConfig config = resolve_config(common);
    if (zero_motion) config.zero_motion = true;
    if (!dataset_mode && phantom_stem.empty()) {
      throw ConfigError("simulate: pass --phantom STEM or --dataset");
    }
    write_run_record(config, "simulate");
    const SimulateResult r = dataset_mode ? simulate_dataset(config) : simulate_single(config, phantom_stem);
    std::cout << r.manifest_path << "\n";
  });
}

int cmd_train(const CliCommon& common, const std::string& resume_checkpoint, const std::string& manifest_override) {
  return guarded("train", [&] {
    RunConfig config = resolve_config(common);
    if (!manifest_override.empty()) config.dataset_manifest = manifest_override;
    write_run_record(config, "train");
    const TrainResult r = train_run(config, resume_checkpoint);
    std::cout << r.final_checkpoint << "\n";
  });
}

int cmd_reconstruct(const CliCommon& common, const std::string& checkpoint, const std::string& input_stem) {
  return guarded("reconstruct", [&] {
    const RunConfig config = resolve_config(common);
    write_run_record(config, "reconstruct");
    const ReconstructResult r = reconstruct_file(checkpoint, input_stem, config.out_dir);
    std::cout << r.binary_stem << ".raw\n";
  });
}

int cmd_evaluate(const CliCommon& common, const std::string& mode, const std::string& manifest,
                 const std::string& recon_dir) {
  return guarded("evaluate", [&] {
    const RunConfig config = resolve_config(common);
    write_run_record(config, "evaluate");
    const std::string out_csv = (fs::path(config.out_dir) / ("evaluate_" + mode + ".csv")).string();
    const EvaluateResult r = evaluate_run(config, mode, manifest, recon_dir, out_csv);
    std::cout << r.csv_path << "\n";
  });
}

}  // namespace angio
