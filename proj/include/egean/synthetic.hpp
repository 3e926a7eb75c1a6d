#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "egean/estimators.hpp"
#include "egean/rng.hpp"

namespace egean {

// Ground-truth world description. shift_strength couples click propensity to
// conversion-relevant covariates: the propensity logit is
// (propensity_params + shift_strength * cvr_params) . x, so zero shift keeps
// the click mechanism independent of the CVR signal whenever the two weight
// vectors have disjoint support.
struct WorldSpec {
  std::size_t n_pairs = 0;
  std::size_t feature_dim = 0;
  std::vector<double> propensity_params;
  std::vector<double> cvr_params;
  double shift_strength = 0.0;
  double min_propensity = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

// Materialized world: features plus the true propensity p and conversion
// probability q per pair. Regenerating from the same spec is bit-identical.
struct SyntheticWorld {
  WorldSpec spec;
  std::vector<double> features;  // n_pairs x feature_dim, row-major
  std::vector<double> p;         // clamp(sigmoid(logit), min_propensity, 1)
  std::vector<double> q;         // sigmoid(cvr_params . x)

  std::size_t size() const { return p.size(); }
};

SyntheticWorld generate_world(const WorldSpec& spec);

// One draw of o ~ Bernoulli(p) and r ~ Bernoulli(q). The oracle view defines
// r everywhere; the masked view only where o = 1.
struct ObservationSample {
  EstimatorBatch oracle;
  EstimatorBatch masked;
};

ObservationSample sample_observations(const SyntheticWorld& world, std::uint64_t seed);

enum class EstimatorId { Ideal, Naive, Dr, Pvdr };

std::string estimator_name(EstimatorId id);
EstimatorId estimator_from_name(const std::string& name);

// Fixed predictor/imputation inputs for a bias study. p_hat empty means "use
// the world's true propensities".
struct StudyInputs {
  std::vector<double> r_hat;
  std::vector<double> e_hat;
  std::vector<double> p_hat;
};

double evaluate_estimator(const EstimatorBatch& b, EstimatorId id, double lambda,
                          ClampCounter* clamp = nullptr);

// Exact expectation of an estimator over observation patterns. Patterns where
// the estimator is undefined (|O| = 0 for the naive form and for pvdr at
// lambda = 0) are excluded and the rest renormalized; the excluded mass is
// reported so the convention is never hidden.
struct ExactExpectation {
  double value = 0.0;
  double ideal = 0.0;          // reference the bias is measured against
  double excluded_mass = 0.0;  // probability mass of undefined patterns
  std::uint64_t undefined_patterns = 0;

  double bias() const { return value - ideal; }
};

// Conditional on a fixed conversion realization: enumerates the 2^n
// observation patterns. Refuses n_pairs > 20.
ExactExpectation exact_expected_loss(const SyntheticWorld& world, const StudyInputs& inputs,
                                     std::span<const double> realized_r, EstimatorId id,
                                     double lambda);

// Additionally marginalizes conversions over r ~ Bernoulli(q): enumerates the
// 4^n joint patterns. Refuses n_pairs > 10.
ExactExpectation exact_expected_loss_marginal(const SyntheticWorld& world,
                                              const StudyInputs& inputs, EstimatorId id,
                                              double lambda);

// Thrown by the enumeration entry points when the world is too large.
struct EnumerationSizeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Summary of a Monte-Carlo replicate study at one (estimator, lambda) point.
struct ReplicateStats {
  std::string estimator;
  double lambda = 0.0;
  double mean_loss = 0.0;
  double bias = 0.0;      // mean_loss - ideal reference
  double variance = 0.0;  // unbiased sample variance across replicates
  double ci_halfwidth = 0.0;           // 95% normal-approx half-width of the mean
  double variance_ci_halfwidth = 0.0;  // 95% half-width of the variance estimate
  std::size_t replicates = 0;
  std::size_t undefined_replicates = 0;  // skipped draws (same convention as exact)
  std::uint64_t clamp_events = 0;
};

// Resamples o per replicate (conditional on realized_r) with per-replicate
// seeds derived from the master seed; replicate order is fixed, so results
// are deterministic. Requires replicates >= 100.
std::vector<ReplicateStats> monte_carlo_stats(const SyntheticWorld& world,
                                              const StudyInputs& inputs,
                                              std::span<const double> realized_r,
                                              EstimatorId id,
                                              std::span<const double> lambda_grid,
                                              std::size_t replicates, std::uint64_t seed);

// Per-study CSV with columns
// estimator,lambda,bias,variance,ci_halfwidth,replicates,clamp_events.
void write_stats_csv(const std::string& path, const std::vector<ReplicateStats>& stats);

}  // namespace egean
