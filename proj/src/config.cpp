#include "egean/config.hpp"

#include <cstdio>
#include <fstream>

#include "egean/rng.hpp"

namespace egean {

namespace {

using nlohmann::json;

// Applies fn(key, value) to every member and rejects keys fn does not accept.
template <typename Fn>
void walk_object(const json& j, const std::string& path, Fn&& fn) {
  if (!j.is_object()) throw ConfigError("config: expected an object at " + path);
  for (const auto& [key, value] : j.items()) {
    if (!fn(key, value))
      throw ConfigError("config: unknown key '" + path + key + "'");
  }
}

}  // namespace

json schema_to_json(const DatasetSchema& schema) {
  json fields = json::array();
  for (const FieldSpec& f : schema.fields) {
    fields.push_back({{"name", f.name},
                      {"vocab", f.vocab},
                      {"side", f.side == FieldSide::User ? "user" : "item"}});
  }
  return fields;
}

DatasetSchema schema_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("schema: expected an array of fields");
  DatasetSchema schema;
  for (const json& fj : j) {
    FieldSpec f;
    walk_object(fj, "schema.field.", [&](const std::string& key, const json& v) {
      if (key == "name") f.name = v.get<std::string>();
      else if (key == "vocab") f.vocab = v.get<std::size_t>();
      else if (key == "side") {
        const std::string side = v.get<std::string>();
        if (side == "user") f.side = FieldSide::User;
        else if (side == "item") f.side = FieldSide::Item;
        else throw ConfigError("schema: field side must be user or item");
      } else return false;
      return true;
    });
    if (f.name.empty() || f.vocab == 0)
      throw ConfigError("schema: every field needs a name and a positive vocab");
    schema.fields.push_back(std::move(f));
  }
  return schema;
}

json model_config_to_json(const ModelConfig& mc) {
  return json{{"embed_dim", mc.embed_dim},
              {"lora_rank", mc.lora_rank},
              {"task_embed_dim", mc.task_embed_dim},
              {"tower_hidden", mc.tower_hidden},
              {"exposure_hidden", mc.exposure_hidden},
              {"imputation_hidden", mc.imputation_hidden},
              {"leaky_slope", mc.leaky_slope},
              {"exposure_network_on", mc.exposure_network_on},
              {"task_personalized_network_on", mc.task_personalized_network_on},
              {"metric_learning_on", mc.metric_learning_on}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig mc;
  walk_object(j, "model.", [&](const std::string& key, const json& v) {
    if (key == "embed_dim") mc.embed_dim = v.get<std::size_t>();
    else if (key == "lora_rank") mc.lora_rank = v.get<std::size_t>();
    else if (key == "task_embed_dim") mc.task_embed_dim = v.get<std::size_t>();
    else if (key == "tower_hidden") mc.tower_hidden = v.get<std::vector<std::size_t>>();
    else if (key == "exposure_hidden") mc.exposure_hidden = v.get<std::vector<std::size_t>>();
    else if (key == "imputation_hidden")
      mc.imputation_hidden = v.get<std::vector<std::size_t>>();
    else if (key == "leaky_slope") mc.leaky_slope = v.get<double>();
    else if (key == "exposure_network_on") mc.exposure_network_on = v.get<bool>();
    else if (key == "task_personalized_network_on")
      mc.task_personalized_network_on = v.get<bool>();
    else if (key == "metric_learning_on") mc.metric_learning_on = v.get<bool>();
    else return false;
    return true;
  });
  return mc;
}

namespace {

json world_to_json(const WorldSpec& w) {
  return json{{"n_pairs", w.n_pairs},
              {"feature_dim", w.feature_dim},
              {"propensity_params", w.propensity_params},
              {"cvr_params", w.cvr_params},
              {"shift_strength", w.shift_strength},
              {"min_propensity", w.min_propensity},
              {"seed", w.seed}};
}

WorldSpec world_from_json(const json& j) {
  WorldSpec w;
  walk_object(j, "world.", [&](const std::string& key, const json& v) {
    if (key == "n_pairs") w.n_pairs = v.get<std::size_t>();
    else if (key == "feature_dim") w.feature_dim = v.get<std::size_t>();
    else if (key == "propensity_params") w.propensity_params = v.get<std::vector<double>>();
    else if (key == "cvr_params") w.cvr_params = v.get<std::vector<double>>();
    else if (key == "shift_strength") w.shift_strength = v.get<double>();
    else if (key == "min_propensity") w.min_propensity = v.get<double>();
    else if (key == "seed") w.seed = v.get<std::uint64_t>();
    else return false;
    return true;
  });
  return w;
}

json simulate_to_json(const SimulateConfig& s) {
  return json{{"n_users", s.n_users},
              {"n_items", s.n_items},
              {"n_buckets", s.n_buckets},
              {"propensity_scale", s.propensity_scale},
              {"cvr_scale", s.cvr_scale}};
}

SimulateConfig simulate_from_json(const json& j) {
  SimulateConfig s;
  walk_object(j, "simulate.", [&](const std::string& key, const json& v) {
    if (key == "n_users") s.n_users = v.get<std::size_t>();
    else if (key == "n_items") s.n_items = v.get<std::size_t>();
    else if (key == "n_buckets") s.n_buckets = v.get<std::size_t>();
    else if (key == "propensity_scale") s.propensity_scale = v.get<double>();
    else if (key == "cvr_scale") s.cvr_scale = v.get<double>();
    else return false;
    return true;
  });
  return s;
}

json train_to_json(const TrainConfig& t) {
  return json{{"pretrain_epochs", t.pretrain_epochs},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"weight_decay", t.weight_decay},
              {"lambda", t.lambda},
              {"w_ctr", t.w_ctr},
              {"w_cvr", t.w_cvr},
              {"w_imp", t.w_imp},
              {"alpha_mmd", t.alpha_mmd},
              {"gamma_steady", t.gamma_steady},
              {"cvr_estimator", cvr_estimator_name(t.cvr_estimator)},
              {"seed", t.seed},
              {"metric_sample_cap", t.metric_sample_cap}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  walk_object(j, "train.", [&](const std::string& key, const json& v) {
    if (key == "pretrain_epochs") t.pretrain_epochs = v.get<std::size_t>();
    else if (key == "epochs") t.epochs = v.get<std::size_t>();
    else if (key == "batch_size") t.batch_size = v.get<std::size_t>();
    else if (key == "learning_rate") t.learning_rate = v.get<double>();
    else if (key == "weight_decay") t.weight_decay = v.get<double>();
    else if (key == "lambda") t.lambda = v.get<double>();
    else if (key == "w_ctr") t.w_ctr = v.get<double>();
    else if (key == "w_cvr") t.w_cvr = v.get<double>();
    else if (key == "w_imp") t.w_imp = v.get<double>();
    else if (key == "alpha_mmd") t.alpha_mmd = v.get<double>();
    else if (key == "gamma_steady") t.gamma_steady = v.get<double>();
    else if (key == "cvr_estimator")
      t.cvr_estimator = cvr_estimator_from_name(v.get<std::string>());
    else if (key == "seed") t.seed = v.get<std::uint64_t>();
    else if (key == "metric_sample_cap") t.metric_sample_cap = v.get<std::size_t>();
    else return false;
    return true;
  });
  return t;
}

json bench_to_json(const BenchConfig& b) {
  return json{{"estimators", b.estimators},
              {"lambda_grid", b.lambda_grid},
              {"replicates", b.replicates},
              {"exact", b.exact},
              {"r_hat_mode", b.r_hat_mode},
              {"r_hat_constant", b.r_hat_constant},
              {"e_hat_mode", b.e_hat_mode},
              {"e_hat_constant", b.e_hat_constant},
              {"seed", b.seed}};
}

BenchConfig bench_from_json(const json& j) {
  BenchConfig b;
  walk_object(j, "bench.", [&](const std::string& key, const json& v) {
    if (key == "estimators") b.estimators = v.get<std::vector<std::string>>();
    else if (key == "lambda_grid") b.lambda_grid = v.get<std::vector<double>>();
    else if (key == "replicates") b.replicates = v.get<std::size_t>();
    else if (key == "exact") b.exact = v.get<bool>();
    else if (key == "r_hat_mode") b.r_hat_mode = v.get<std::string>();
    else if (key == "r_hat_constant") b.r_hat_constant = v.get<double>();
    else if (key == "e_hat_mode") b.e_hat_mode = v.get<std::string>();
    else if (key == "e_hat_constant") b.e_hat_constant = v.get<double>();
    else if (key == "seed") b.seed = v.get<std::uint64_t>();
    else return false;
    return true;
  });
  return b;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  walk_object(j, "", [&](const std::string& key, const json& v) {
    if (key == "output_root") cfg.output_root = v.get<std::string>();
    else if (key == "data_dir") cfg.data_dir = v.get<std::string>();
    else if (key == "checkpoint") cfg.checkpoint = v.get<std::string>();
    else if (key == "world") cfg.world = world_from_json(v);
    else if (key == "simulate") cfg.simulate = simulate_from_json(v);
    else if (key == "model") cfg.model = model_config_from_json(v);
    else if (key == "train") cfg.train = train_from_json(v);
    else if (key == "bench") cfg.bench = bench_from_json(v);
    else return false;
    return true;
  });
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  return json{{"output_root", cfg.output_root},
              {"data_dir", cfg.data_dir},
              {"checkpoint", cfg.checkpoint},
              {"world", world_to_json(cfg.world)},
              {"simulate", simulate_to_json(cfg.simulate)},
              {"model", model_config_to_json(cfg.model)},
              {"train", train_to_json(cfg.train)},
              {"bench", bench_to_json(cfg.bench)}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::string run_config_hash(const RunConfig& cfg) {
  json j = run_config_to_json(cfg);
  j.erase("output_root");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

void resolve_world_params(RunConfig& cfg) {
  WorldSpec& w = cfg.world;
  if (!w.propensity_params.empty() && !w.cvr_params.empty()) return;
  if (w.feature_dim == 0) throw ConfigError("world.feature_dim must be positive");
  const std::size_t half = (w.feature_dim + 1) / 2;
  Rng rng = Rng(w.seed).derive("world-params");
  if (w.propensity_params.empty()) {
    w.propensity_params.assign(w.feature_dim, 0.0);
    for (std::size_t c = 0; c < half; ++c)
      w.propensity_params[c] = rng.normal() * cfg.simulate.propensity_scale;
  }
  if (w.cvr_params.empty()) {
    w.cvr_params.assign(w.feature_dim, 0.0);
    for (std::size_t c = half; c < w.feature_dim; ++c)
      w.cvr_params[c] = rng.normal() * cfg.simulate.cvr_scale;
  }
}

}  // namespace egean
