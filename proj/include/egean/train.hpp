#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "egean/data.hpp"
#include "egean/estimators.hpp"
#include "egean/model.hpp"

namespace egean {

enum class CvrEstimatorKind { Pvdr, Naive, Dr };

std::string cvr_estimator_name(CvrEstimatorKind k);
CvrEstimatorKind cvr_estimator_from_name(const std::string& name);

struct TrainConfig {
  std::size_t pretrain_epochs = 5;
  std::size_t epochs = 10;
  std::size_t batch_size = 1024;
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  double lambda = 0.5;
  double w_ctr = 1.0;
  double w_cvr = 1.0;
  double w_imp = 1.0;
  double alpha_mmd = 0.1;
  double gamma_steady = 0.1;
  CvrEstimatorKind cvr_estimator = CvrEstimatorKind::Pvdr;
  std::uint64_t seed = 0;
  // row cap of the deterministic subset used for per-epoch residual/MMD traces
  std::size_t metric_sample_cap = 2048;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochTrace {
  std::size_t epoch = 0;  // 0 is the pre-finetuning snapshot
  double ctr_loss = 0.0;
  double cvr_loss = 0.0;
  double imputation_loss = 0.0;
  double mmd2 = 0.0;                   // clicked CVR embeddings vs all shared
  double steady_state_residual = 0.0;  // evaluated on the metric subset
  std::uint64_t clamp_events = 0;      // cumulative propensity-floor hits
};

struct MetricsReport {
  double cvr_auc = 0.0;
  std::string cvr_auc_space;  // "full" (oracle labels) or "click"
  double ctcvr_auc = 0.0;
  bool auc_computed = false;
  std::vector<EpochTrace> epochs;
  std::uint64_t clamp_events = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
};

// Raised when training hits a non-finite loss; carries the diagnostics the
// abort contract requires.
struct NumericAbortError : std::runtime_error {
  explicit NumericAbortError(const std::string& msg) : std::runtime_error(msg) {}
};

// Ground truth emitted next to a simulated dataset: true propensity, true
// conversion probability and the realized conversion per pair, in record
// order.
struct TruthSidecar {
  std::vector<double> p_true;
  std::vector<double> q_true;
  std::vector<double> r_true;

  std::size_t size() const { return p_true.size(); }
};

void save_truth_sidecar(const std::string& path, const TruthSidecar& truth);
TruthSidecar load_truth_sidecar(const std::string& path);

struct PretrainReport {
  std::vector<double> epoch_loss;  // mean exposure cross-entropy per epoch
  std::size_t skipped_negatives = 0;
};

// Stage 1: trains the shared embedding table and the exposure network on
// exposure labels with 1:1 in-batch negatives, then freezes the table.
PretrainReport pretrain_exposure(EgeanModel& model, const Dataset& data,
                                 const TrainConfig& config);

// Stage 2: cyclic per-batch updates — (1) CTR/propensity parameters on click
// cross-entropy plus the steady-state penalty, (2) imputation parameters,
// (3) CVR tower/LoRA/gate parameters on the configured CVR estimator plus the
// MMD alignment term. The embedding table stays frozen throughout.
MetricsReport finetune_multitask(EgeanModel& model, const Dataset& data,
                                 const TrainConfig& config);

// Rank-based AUC; tied scores contribute 1/2. Throws std::domain_error unless
// both classes are present.
double auc(std::span<const double> scores, std::span<const double> labels);

// Fills CVR AUC (full impression space when oracle truth is available,
// otherwise click space, flagged as such) and CTCVR AUC over all exposures.
void evaluate_into(MetricsReport& report, EgeanModel& model, const Dataset& data,
                   const TruthSidecar* truth, std::size_t batch_size = 1024);

MetricsReport evaluate(EgeanModel& model, const Dataset& data, const TruthSidecar* truth,
                       std::size_t batch_size = 1024);

// Per-sample rows {variant, sample id, click label, embedding values} for the
// shared and the CVR-personalized embeddings.
void export_embeddings(EgeanModel& model, const Dataset& data, const std::string& path,
                       std::size_t batch_size = 1024);

// Stable hash of the full (model, train) configuration pair.
std::string config_hash(const ModelConfig& mc, const TrainConfig& tc);

// Order-preserving batching used by evaluation and export.
std::vector<Batch> make_sequential_batches(const std::vector<InteractionRecord>& records,
                                           std::size_t batch_size);

void write_metrics_json(const std::string& path, const MetricsReport& report);
void write_trace_csv(const std::string& path, const MetricsReport& report);

}  // namespace egean
