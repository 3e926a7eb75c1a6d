#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace egean {

// Counts of propensities that hit the division-safety floor. Clamping is
// reported, never silent: small propensities are exactly the regime these
// estimators exist for.
struct ClampCounter {
  std::uint64_t events = 0;
};

// Floor applied to propensities inside every estimator before division.
inline constexpr double kPropensityFloor = 1e-6;

// One aligned view of a sample set: observation indicators, propensities,
// conversion labels (possibly partial), CVR predictions, imputed errors and
// realized errors. All populated vectors share length size().
struct EstimatorBatch {
  std::vector<double> o;       // {0,1} observation (click) indicators
  std::vector<double> p_hat;   // propensities, strictly positive
  std::vector<double> r;       // conversion labels where r_mask is set
  std::vector<std::uint8_t> r_mask;
  std::vector<double> r_hat;   // predicted CVR in (0,1)
  std::vector<double> e_hat;   // imputed errors, nonnegative
  std::vector<double> e;       // realized errors where e_mask is set
  std::vector<std::uint8_t> e_mask;

  std::size_t size() const { return o.size(); }
  std::size_t clicked_count() const;

  std::optional<double> r_at(std::size_t i) const {
    if (i < r_mask.size() && r_mask[i]) return r[i];
    return std::nullopt;
  }

  // Fills e = ce_delta(r, r_hat) wherever r is defined.
  void compute_errors();

  // Throws std::invalid_argument when the populated fields violate the type
  // invariants (length mismatches, nonpositive propensities, o outside {0,1},
  // or e missing on a clicked pair while e is populated).
  void validate() const;
};

// Cross-entropy -r*log(r_hat) - (1-r)*log(1-r_hat); r_hat is clamped to
// [1e-12, 1-1e-12] before the logs.
double ce_delta(double r, double r_hat);

// Mean error over the whole sample set; requires r everywhere.
double ideal_loss(const EstimatorBatch& b);

// Mean error over the clicked set; throws std::domain_error when no pair is
// clicked.
double naive_loss(const EstimatorBatch& b, ClampCounter* clamp = nullptr);

// sum(o*e/p) / (lambda*|D| + (1-lambda)*sum(o/p)). At lambda = 1 this is the
// plain inverse-propensity form; at lambda = 0 the self-normalized form,
// which is undefined when nothing is clicked.
double pvdr_loss(const EstimatorBatch& b, double lambda, ClampCounter* clamp = nullptr);

// lambda + (1-lambda)*A - B with A = mean(o/p) and B = sum(o*e_hat/p)/sum(e_hat).
// Zero means the control condition is met. Throws when sum(e_hat) is zero.
double steady_state_residual(const EstimatorBatch& b, double lambda,
                             ClampCounter* clamp = nullptr);

// Standard doubly robust reference: mean(e_hat + o*(e - e_hat)/p).
double dr_loss(const EstimatorBatch& b, ClampCounter* clamp = nullptr);

// Mean of the imputed errors over the whole set (diagnostic only; see
// imputation_training_loss for the objective the imputation model minimizes).
double imputation_mean(const EstimatorBatch& b);

// Inverse-propensity-weighted squared imputation error over clicked pairs,
// normalized by |D|: sum_{o=1} (e_hat - e)^2 / p  / |D|. Zero when nothing is
// clicked (no signal).
double imputation_training_loss(const EstimatorBatch& b, ClampCounter* clamp = nullptr);

enum class KernelKind { Rbf, Linear };

struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  // Fixed bandwidth when positive; <= 0 selects the median heuristic
  // (median pairwise distance over the pooled samples).
  double bandwidth = -1.0;

  static KernelSpec rbf_median() { return {KernelKind::Rbf, -1.0}; }
  static KernelSpec rbf(double bw) { return {KernelKind::Rbf, bw}; }
  static KernelSpec linear() { return {KernelKind::Linear, 0.0}; }
};

// Row-major sample matrix for the plain (non-differentiable) MMD entry point.
struct SampleMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;  // n*d

  static SampleMatrix from_rows(const std::vector<std::vector<double>>& rows);
};

// V-statistic squared MMD: mean k(X,X) + mean k(Y,Y) - 2 mean k(X,Y).
// Nonnegative for PSD kernels; throws on empty sets or width mismatch.
double mmd2(const SampleMatrix& x, const SampleMatrix& y, const KernelSpec& kernel);

// Median pairwise Euclidean distance over the pooled rows of x and y,
// floored at 1e-9. This is the bandwidth the median heuristic resolves to.
double median_heuristic_bandwidth(const SampleMatrix& x, const SampleMatrix& y);

}  // namespace egean
