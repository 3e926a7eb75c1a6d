#include "egean/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "egean/checkpoint.hpp"
#include "egean/config.hpp"
#include "egean/data.hpp"
#include "egean/synthetic.hpp"
#include "egean/train.hpp"

namespace egean::cli {

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stoul(cell));
  return out;
}

std::vector<std::string> parse_string_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

// Pending string-typed overrides that need parsing into structured fields.
struct RawOverrides {
  std::string tower_hidden, exposure_hidden, imputation_hidden;
  std::string propensity_params, cvr_params;
  std::string bench_estimators, bench_lambda_grid;
  std::string cvr_estimator;
  std::string ablate;
};

void apply_raw_overrides(RunConfig& cfg, const RawOverrides& raw) {
  if (!raw.tower_hidden.empty()) cfg.model.tower_hidden = parse_size_list(raw.tower_hidden);
  if (!raw.exposure_hidden.empty())
    cfg.model.exposure_hidden = parse_size_list(raw.exposure_hidden);
  if (!raw.imputation_hidden.empty())
    cfg.model.imputation_hidden = parse_size_list(raw.imputation_hidden);
  if (!raw.propensity_params.empty())
    cfg.world.propensity_params = parse_double_list(raw.propensity_params);
  if (!raw.cvr_params.empty()) cfg.world.cvr_params = parse_double_list(raw.cvr_params);
  if (!raw.bench_estimators.empty())
    cfg.bench.estimators = parse_string_list(raw.bench_estimators);
  if (!raw.bench_lambda_grid.empty())
    cfg.bench.lambda_grid = parse_double_list(raw.bench_lambda_grid);
  if (!raw.cvr_estimator.empty())
    cfg.train.cvr_estimator = cvr_estimator_from_name(raw.cvr_estimator);
  if (!raw.ablate.empty()) {
    if (raw.ablate == "without-EN") cfg.model.exposure_network_on = false;
    else if (raw.ablate == "without-TPN") cfg.model.task_personalized_network_on = false;
    else if (raw.ablate == "without-ML") cfg.model.metric_learning_on = false;
    else throw ConfigError("--ablate expects without-EN, without-TPN or without-ML");
  }
}

// Binds every config field to a dotted flag on the given subcommand.
void bind_options(CLI::App* cmd, RunConfig& cfg, RawOverrides& raw) {
  cmd->add_option("--output-root", cfg.output_root, "artifact root directory");
  cmd->add_option("--data-dir", cfg.data_dir, "directory with dataset.csv/manifest.json");
  cmd->add_option("--checkpoint", cfg.checkpoint, "model checkpoint path");

  cmd->add_option("--world.n_pairs", cfg.world.n_pairs);
  cmd->add_option("--world.feature_dim", cfg.world.feature_dim);
  cmd->add_option("--world.shift_strength", cfg.world.shift_strength);
  cmd->add_option("--world.min_propensity", cfg.world.min_propensity);
  cmd->add_option("--world.seed", cfg.world.seed);
  cmd->add_option("--world.propensity_params", raw.propensity_params,
                  "comma-separated weights");
  cmd->add_option("--world.cvr_params", raw.cvr_params, "comma-separated weights");

  cmd->add_option("--simulate.n_users", cfg.simulate.n_users);
  cmd->add_option("--simulate.n_items", cfg.simulate.n_items);
  cmd->add_option("--simulate.n_buckets", cfg.simulate.n_buckets);
  cmd->add_option("--simulate.propensity_scale", cfg.simulate.propensity_scale);
  cmd->add_option("--simulate.cvr_scale", cfg.simulate.cvr_scale);

  cmd->add_option("--model.embed_dim", cfg.model.embed_dim);
  cmd->add_option("--model.lora_rank", cfg.model.lora_rank);
  cmd->add_option("--model.task_embed_dim", cfg.model.task_embed_dim);
  cmd->add_option("--model.leaky_slope", cfg.model.leaky_slope);
  cmd->add_option("--model.tower_hidden", raw.tower_hidden, "comma-separated widths");
  cmd->add_option("--model.exposure_hidden", raw.exposure_hidden);
  cmd->add_option("--model.imputation_hidden", raw.imputation_hidden);
  cmd->add_option("--model.exposure_network_on", cfg.model.exposure_network_on);
  cmd->add_option("--model.task_personalized_network_on",
                  cfg.model.task_personalized_network_on);
  cmd->add_option("--model.metric_learning_on", cfg.model.metric_learning_on);

  cmd->add_option("--train.pretrain_epochs", cfg.train.pretrain_epochs);
  cmd->add_option("--train.epochs", cfg.train.epochs);
  cmd->add_option("--train.batch_size", cfg.train.batch_size);
  cmd->add_option("--train.learning_rate", cfg.train.learning_rate);
  cmd->add_option("--train.weight_decay", cfg.train.weight_decay);
  cmd->add_option("--train.lambda", cfg.train.lambda);
  cmd->add_option("--train.w_ctr", cfg.train.w_ctr);
  cmd->add_option("--train.w_cvr", cfg.train.w_cvr);
  cmd->add_option("--train.w_imp", cfg.train.w_imp);
  cmd->add_option("--train.alpha_mmd", cfg.train.alpha_mmd);
  cmd->add_option("--train.gamma_steady", cfg.train.gamma_steady);
  cmd->add_option("--train.cvr_estimator", raw.cvr_estimator, "pvdr|naive|dr");
  cmd->add_option("--train.seed", cfg.train.seed);
  cmd->add_option("--train.metric_sample_cap", cfg.train.metric_sample_cap);
  cmd->add_option("--ablate", raw.ablate, "without-EN|without-TPN|without-ML");

  cmd->add_option("--bench.estimators", raw.bench_estimators, "comma-separated names");
  cmd->add_option("--bench.lambda_grid", raw.bench_lambda_grid, "comma-separated values");
  cmd->add_option("--bench.replicates", cfg.bench.replicates);
  cmd->add_option("--bench.exact", cfg.bench.exact);
  cmd->add_option("--bench.r_hat_mode", cfg.bench.r_hat_mode);
  cmd->add_option("--bench.r_hat_constant", cfg.bench.r_hat_constant);
  cmd->add_option("--bench.e_hat_mode", cfg.bench.e_hat_mode);
  cmd->add_option("--bench.e_hat_constant", cfg.bench.e_hat_constant);
  cmd->add_option("--bench.seed", cfg.bench.seed);
}

// Creates the content-addressed run directory and writes the resolved config
// echo (with its hash) into it.
fs::path prepare_run_dir(const RunConfig& cfg, const std::string& hash) {
  fs::path dir = fs::path(cfg.output_root) / hash;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create run directory " + dir.string());
  nlohmann::json echo = run_config_to_json(cfg);
  echo["config_hash"] = hash;
  std::ofstream out(dir / "config.json");
  if (!out) throw std::runtime_error("cannot write config echo in " + dir.string());
  out << echo.dump(2) << '\n';
  return dir;
}

Dataset load_data_dir(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("data_dir is required for this command");
  const fs::path dir(cfg.data_dir);
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf)
    throw std::runtime_error("missing dataset manifest " + manifest_path.string());
  nlohmann::json mj;
  mf >> mj;
  DatasetSchema schema = schema_from_json(mj.at("schema"));
  return load_dataset((dir / "dataset.csv").string(), schema);
}

std::optional<TruthSidecar> load_truth_if_present(const RunConfig& cfg) {
  const fs::path p = fs::path(cfg.data_dir) / "truth.csv";
  if (!fs::exists(p)) return std::nullopt;
  return load_truth_sidecar(p.string());
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_simulate(RunConfig cfg) {
  resolve_world_params(cfg);
  cfg.world.validate();
  const std::string hash = run_config_hash(cfg);
  const fs::path dir = prepare_run_dir(cfg, hash);

  SyntheticWorld world = generate_world(cfg.world);
  SimulatedDataset sim = simulate_dataset(world, cfg.simulate);

  save_dataset((dir / "dataset.csv").string(), sim.dataset.schema, sim.dataset.records);
  nlohmann::json mj;
  mj["schema"] = schema_to_json(sim.dataset.schema);
  const DatasetManifest& manifest = sim.dataset.manifest;
  mj["counts"] = {{"users", manifest.users},
                  {"items", manifest.items},
                  {"exposures", manifest.exposures},
                  {"clicks", manifest.clicks},
                  {"conversions", manifest.conversions}};
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest");
    out << mj.dump(2) << '\n';
  }
  save_truth_sidecar((dir / "truth.csv").string(), sim.truth);
  std::cout << dir.string() << '\n';
  return kExitOk;
}

EgeanModel build_model(const RunConfig& cfg, const DatasetSchema& schema) {
  return EgeanModel(schema, cfg.model, Rng(cfg.train.seed).derive("model-init").seed());
}

void write_pretrain_json(const fs::path& path, const PretrainReport& rep) {
  nlohmann::json j;
  j["epoch_loss"] = rep.epoch_loss;
  j["skipped_negatives"] = rep.skipped_negatives;
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

int cmd_pretrain(RunConfig cfg) {
  const std::string hash = run_config_hash(cfg);
  const fs::path dir = prepare_run_dir(cfg, hash);
  Dataset data = load_data_dir(cfg);
  EgeanModel model = build_model(cfg, data.schema);
  PretrainReport rep = pretrain_exposure(model, data, cfg.train);
  write_pretrain_json(dir / "pretrain.json", rep);
  save_checkpoint((dir / "checkpoint.ckpt").string(), model);
  std::cout << dir.string() << '\n';
  return kExitOk;
}

int cmd_train(RunConfig cfg) {
  const std::string hash = run_config_hash(cfg);
  const fs::path dir = prepare_run_dir(cfg, hash);
  Dataset data = load_data_dir(cfg);
  EgeanModel model = build_model(cfg, data.schema);
  if (cfg.model.exposure_network_on) {
    PretrainReport rep = pretrain_exposure(model, data, cfg.train);
    write_pretrain_json(dir / "pretrain.json", rep);
  }
  MetricsReport report = finetune_multitask(model, data, cfg.train);
  const auto truth = load_truth_if_present(cfg);
  evaluate_into(report, model, data, truth ? &*truth : nullptr, cfg.train.batch_size);
  save_checkpoint((dir / "checkpoint.ckpt").string(), model);
  write_metrics_json((dir / "metrics.json").string(), report);
  write_trace_csv((dir / "trace.csv").string(), report);
  std::cout << dir.string() << '\n';
  return kExitOk;
}

int cmd_evaluate(RunConfig cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint is required for evaluate");
  const std::string hash = run_config_hash(cfg);
  const fs::path dir = prepare_run_dir(cfg, hash);
  EgeanModel model = load_checkpoint(cfg.checkpoint);
  Dataset data = load_data_dir(cfg);
  const auto truth = load_truth_if_present(cfg);
  MetricsReport report = evaluate(model, data, truth ? &*truth : nullptr,
                                  cfg.train.batch_size);
  report.seed = cfg.train.seed;
  report.config_hash = hash;
  write_metrics_json((dir / "metrics.json").string(), report);
  std::cout << dir.string() << '\n';
  return kExitOk;
}

int cmd_export_embeddings(RunConfig cfg) {
  if (cfg.checkpoint.empty())
    throw ConfigError("checkpoint is required for export-embeddings");
  const std::string hash = run_config_hash(cfg);
  const fs::path dir = prepare_run_dir(cfg, hash);
  EgeanModel model = load_checkpoint(cfg.checkpoint);
  Dataset data = load_data_dir(cfg);
  export_embeddings(model, data, (dir / "embeddings.csv").string(),
                    cfg.train.batch_size);
  std::cout << dir.string() << '\n';
  return kExitOk;
}

int cmd_bench_estimators(RunConfig cfg) {
  resolve_world_params(cfg);
  cfg.world.validate();
  const std::string hash = run_config_hash(cfg);
  const fs::path dir = prepare_run_dir(cfg, hash);

  SyntheticWorld world = generate_world(cfg.world);
  ObservationSample obs =
      sample_observations(world, Rng(cfg.bench.seed).derive("bench-observations").seed());
  const std::vector<double>& realized_r = obs.oracle.r;

  StudyInputs inputs;
  if (cfg.bench.r_hat_mode == "true_q") inputs.r_hat = world.q;
  else if (cfg.bench.r_hat_mode == "constant")
    inputs.r_hat.assign(world.size(), cfg.bench.r_hat_constant);
  else throw ConfigError("bench.r_hat_mode must be true_q or constant");

  if (cfg.bench.e_hat_mode == "true_e") {
    inputs.e_hat.resize(world.size());
    for (std::size_t i = 0; i < world.size(); ++i)
      inputs.e_hat[i] = ce_delta(realized_r[i], inputs.r_hat[i]);
  } else if (cfg.bench.e_hat_mode == "constant") {
    inputs.e_hat.assign(world.size(), cfg.bench.e_hat_constant);
  } else if (cfg.bench.e_hat_mode == "zero") {
    inputs.e_hat.assign(world.size(), 0.0);
  } else {
    throw ConfigError("bench.e_hat_mode must be true_e, constant or zero");
  }

  std::vector<ReplicateStats> all_stats;
  struct ExactRow {
    double bias = 0.0, excluded = 0.0;
    bool present = false;
  };
  std::vector<ExactRow> exact_rows;

  for (const std::string& name : cfg.bench.estimators) {
    const EstimatorId id = estimator_from_name(name);
    std::vector<ReplicateStats> stats =
        monte_carlo_stats(world, inputs, realized_r, id, cfg.bench.lambda_grid,
                          cfg.bench.replicates, cfg.bench.seed);
    for (double lambda : cfg.bench.lambda_grid) {
      ExactRow row;
      if (cfg.bench.exact) {
        ExactExpectation ex = exact_expected_loss(world, inputs, realized_r, id, lambda);
        row.bias = ex.bias();
        row.excluded = ex.excluded_mass;
        row.present = true;
      }
      exact_rows.push_back(row);
    }
    for (ReplicateStats& s : stats) all_stats.push_back(std::move(s));
  }

  write_stats_csv((dir / "mc_stats.csv").string(), all_stats);
  {
    std::ofstream out(dir / "bench.csv");
    if (!out) throw std::runtime_error("cannot write bench.csv");
    out << "estimator,lambda,mc_bias,mc_variance,mc_ci_halfwidth,replicates,clamp_events";
    if (cfg.bench.exact) out << ",exact_bias,exact_excluded_mass";
    out << '\n';
    char buf[360];
    for (std::size_t i = 0; i < all_stats.size(); ++i) {
      const ReplicateStats& s = all_stats[i];
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%zu,%llu",
                    s.estimator.c_str(), s.lambda, s.bias, s.variance, s.ci_halfwidth,
                    s.replicates, static_cast<unsigned long long>(s.clamp_events));
      out << buf;
      if (cfg.bench.exact) {
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", exact_rows[i].bias,
                      exact_rows[i].excluded);
        out << buf;
      }
      out << '\n';
    }
  }
  std::cout << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"counterfactual CVR estimation laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  RunConfig cfg;
  RawOverrides raw;

  // First pass: pick up --config so file values underlie the flag overrides.
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  try {
    if (!config_path.empty()) cfg = load_run_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  struct Cmd {
    CLI::App* app;
    int (*fn)(RunConfig);
  };
  std::vector<Cmd> cmds;
  auto add_cmd = [&](const char* name, const char* desc, int (*fn)(RunConfig)) {
    CLI::App* c = app.add_subcommand(name, desc);
    c->add_option("--config", config_path, "JSON config file");
    bind_options(c, cfg, raw);
    cmds.push_back({c, fn});
  };
  add_cmd("simulate", "generate a synthetic MNAR dataset with ground truth", cmd_simulate);
  add_cmd("pretrain", "run the exposure pretraining stage", cmd_pretrain);
  add_cmd("train", "pretrain (per flags) and finetune the full model", cmd_train);
  add_cmd("evaluate", "compute AUC metrics for a checkpoint", cmd_evaluate);
  add_cmd("bench-estimators", "exact/Monte-Carlo estimator bias study",
          cmd_bench_estimators);
  add_cmd("export-embeddings", "dump shared and CVR-personalized embeddings",
          cmd_export_embeddings);

  std::vector<const char*> argv;
  argv.push_back("egean");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  // environment override for the output root only
  if (const char* env_root = std::getenv("EGEAN_OUTPUT_ROOT"))
    if (!app.get_subcommands().empty() &&
        app.get_subcommands()[0]->count("--output-root") == 0)
      cfg.output_root = env_root;

  try {
    apply_raw_overrides(cfg, raw);
    for (const Cmd& c : cmds)
      if (c.app->parsed()) return c.fn(cfg);
    std::cerr << "error: no subcommand\n";
    return kExitConfig;
  } catch (const EnumerationSizeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSize;
  } catch (const NumericAbortError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace egean::cli
