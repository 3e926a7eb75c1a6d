#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "egean/data.hpp"
#include "egean/model.hpp"
#include "egean/simulate.hpp"
#include "egean/synthetic.hpp"
#include "egean/train.hpp"

namespace egean {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BenchConfig {
  std::vector<std::string> estimators = {"naive", "dr", "pvdr"};
  std::vector<double> lambda_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t replicates = 1000;
  bool exact = false;
  std::string r_hat_mode = "true_q";  // true_q | constant
  double r_hat_constant = 0.5;
  std::string e_hat_mode = "constant";  // true_e | constant | zero
  double e_hat_constant = 0.25;
  std::uint64_t seed = 7;
};

// Fully resolved run description; every field is overridable by a
// command-line flag with the same dotted path.
struct RunConfig {
  std::string output_root = "runs";
  std::string data_dir;     // directory holding dataset.csv/manifest.json/truth.csv
  std::string checkpoint;   // input checkpoint for evaluate/export
  WorldSpec world;
  SimulateConfig simulate;
  ModelConfig model;
  TrainConfig train;
  BenchConfig bench;
};

// Strict parsers: unknown keys are rejected with their dotted path.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

nlohmann::json schema_to_json(const DatasetSchema& schema);
DatasetSchema schema_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& mc);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Hash of the resolved config with the output section excluded, so the same
// experiment always lands in the same run directory regardless of where the
// artifact tree lives.
std::string run_config_hash(const RunConfig& cfg);

// Fills world.propensity_params / cvr_params when empty: the propensity
// weights live on the first half of the feature dimensions and the CVR
// weights on the second half, drawn from the world seed and scaled by the
// simulate section. Disjoint support keeps zero-shift worlds free of
// covariate shift.
void resolve_world_params(RunConfig& cfg);

}  // namespace egean
