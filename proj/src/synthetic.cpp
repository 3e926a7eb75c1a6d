#include "egean/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace egean {

namespace {

double sigmoid(double x) {
  if (x > 30.0) x = 30.0;
  if (x < -30.0) x = -30.0;
  return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

void WorldSpec::validate() const {
  if (n_pairs == 0) throw std::invalid_argument("WorldSpec: n_pairs must be positive");
  if (feature_dim == 0) throw std::invalid_argument("WorldSpec: feature_dim must be positive");
  if (propensity_params.size() != feature_dim || cvr_params.size() != feature_dim)
    throw std::invalid_argument("WorldSpec: parameter vectors must match feature_dim");
  if (!(min_propensity > 0.0 && min_propensity < 1.0))
    throw std::invalid_argument("WorldSpec: min_propensity must lie in (0, 1)");
  if (shift_strength < 0.0)
    throw std::invalid_argument("WorldSpec: shift_strength must be nonnegative");
}

SyntheticWorld generate_world(const WorldSpec& spec) {
  spec.validate();
  SyntheticWorld world;
  world.spec = spec;
  const std::size_t n = spec.n_pairs, d = spec.feature_dim;
  world.features.resize(n * d);
  Rng rng = Rng(spec.seed).derive("world-features");
  for (double& v : world.features) v = rng.normal();

  world.p.resize(n);
  world.q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double logit_p = 0.0, logit_q = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = world.features[i * d + c];
      logit_p += (spec.propensity_params[c] + spec.shift_strength * spec.cvr_params[c]) * x;
      logit_q += spec.cvr_params[c] * x;
    }
    world.p[i] = std::clamp(sigmoid(logit_p), spec.min_propensity, 1.0);
    world.q[i] = sigmoid(logit_q);
  }
  return world;
}

ObservationSample sample_observations(const SyntheticWorld& world, std::uint64_t seed) {
  const std::size_t n = world.size();
  Rng rng_o = Rng(seed).derive("observations");
  Rng rng_r = Rng(seed).derive("conversions");

  ObservationSample out;
  EstimatorBatch& oracle = out.oracle;
  oracle.o.resize(n);
  oracle.p_hat = world.p;
  oracle.r.resize(n);
  oracle.r_mask.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) oracle.o[i] = rng_o.bernoulli(world.p[i]) ? 1.0 : 0.0;
  for (std::size_t i = 0; i < n; ++i) oracle.r[i] = rng_r.bernoulli(world.q[i]) ? 1.0 : 0.0;

  EstimatorBatch& masked = out.masked;
  masked = oracle;
  for (std::size_t i = 0; i < n; ++i) {
    if (masked.o[i] == 0.0) {
      masked.r[i] = 0.0;
      masked.r_mask[i] = 0;
    }
  }
  return out;
}

std::string estimator_name(EstimatorId id) {
  switch (id) {
    case EstimatorId::Ideal: return "ideal";
    case EstimatorId::Naive: return "naive";
    case EstimatorId::Dr: return "dr";
    case EstimatorId::Pvdr: return "pvdr";
  }
  throw std::logic_error("estimator_name: unknown id");
}

EstimatorId estimator_from_name(const std::string& name) {
  if (name == "ideal") return EstimatorId::Ideal;
  if (name == "naive") return EstimatorId::Naive;
  if (name == "dr") return EstimatorId::Dr;
  if (name == "pvdr") return EstimatorId::Pvdr;
  throw std::invalid_argument("unknown estimator: " + name);
}

double evaluate_estimator(const EstimatorBatch& b, EstimatorId id, double lambda,
                          ClampCounter* clamp) {
  switch (id) {
    case EstimatorId::Ideal: return ideal_loss(b);
    case EstimatorId::Naive: return naive_loss(b, clamp);
    case EstimatorId::Dr: return dr_loss(b, clamp);
    case EstimatorId::Pvdr: return pvdr_loss(b, lambda, clamp);
  }
  throw std::logic_error("evaluate_estimator: unknown id");
}

namespace {

EstimatorBatch make_study_batch(const SyntheticWorld& world, const StudyInputs& inputs,
                                std::span<const double> realized_r) {
  const std::size_t n = world.size();
  if (inputs.r_hat.size() != n)
    throw std::invalid_argument("StudyInputs: r_hat must cover every pair");
  if (realized_r.size() != n)
    throw std::invalid_argument("study: realized conversions must cover every pair");
  EstimatorBatch b;
  b.o.assign(n, 0.0);
  b.p_hat = inputs.p_hat.empty() ? world.p : inputs.p_hat;
  if (b.p_hat.size() != n) throw std::invalid_argument("StudyInputs: p_hat length mismatch");
  b.r.assign(realized_r.begin(), realized_r.end());
  b.r_mask.assign(n, 1);
  b.r_hat = inputs.r_hat;
  b.e_hat = inputs.e_hat;
  b.compute_errors();
  return b;
}

double conditional_ideal(const EstimatorBatch& b) { return ideal_loss(b); }

}  // namespace

ExactExpectation exact_expected_loss(const SyntheticWorld& world, const StudyInputs& inputs,
                                     std::span<const double> realized_r, EstimatorId id,
                                     double lambda) {
  const std::size_t n = world.size();
  if (n > 20)
    throw EnumerationSizeError("exact_expected_loss: n_pairs > 20, use Monte-Carlo mode");
  EstimatorBatch b = make_study_batch(world, inputs, realized_r);

  ExactExpectation out;
  out.ideal = conditional_ideal(b);
  double defined_mass = 0.0;
  double acc = 0.0;
  const std::uint64_t patterns = 1ULL << n;
  for (std::uint64_t pat = 0; pat < patterns; ++pat) {
    double prob = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool clicked = (pat >> i) & 1ULL;
      b.o[i] = clicked ? 1.0 : 0.0;
      prob *= clicked ? world.p[i] : 1.0 - world.p[i];
    }
    try {
      const double value = evaluate_estimator(b, id, lambda, nullptr);
      acc += prob * value;
      defined_mass += prob;
    } catch (const std::domain_error&) {
      out.undefined_patterns += 1;
      out.excluded_mass += prob;
    }
  }
  if (defined_mass <= 0.0)
    throw std::domain_error("exact_expected_loss: estimator undefined on every pattern");
  out.value = acc / defined_mass;
  return out;
}

ExactExpectation exact_expected_loss_marginal(const SyntheticWorld& world,
                                              const StudyInputs& inputs, EstimatorId id,
                                              double lambda) {
  const std::size_t n = world.size();
  if (n > 10)
    throw EnumerationSizeError(
        "exact_expected_loss_marginal: n_pairs > 10, use the conditional mode");
  std::vector<double> r(n, 0.0);
  EstimatorBatch b = make_study_batch(world, inputs, r);

  // Marginal ideal: per-pair expected error under r ~ Bernoulli(q).
  ExactExpectation out;
  for (std::size_t i = 0; i < n; ++i)
    out.ideal += world.q[i] * ce_delta(1.0, b.r_hat[i]) +
                 (1.0 - world.q[i]) * ce_delta(0.0, b.r_hat[i]);
  out.ideal /= static_cast<double>(n);

  double defined_mass = 0.0;
  double acc = 0.0;
  const std::uint64_t patterns = 1ULL << n;
  for (std::uint64_t opat = 0; opat < patterns; ++opat) {
    double oprob = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool clicked = (opat >> i) & 1ULL;
      b.o[i] = clicked ? 1.0 : 0.0;
      oprob *= clicked ? world.p[i] : 1.0 - world.p[i];
    }
    for (std::uint64_t rpat = 0; rpat < patterns; ++rpat) {
      double prob = oprob;
      for (std::size_t i = 0; i < n; ++i) {
        const bool converted = (rpat >> i) & 1ULL;
        b.r[i] = converted ? 1.0 : 0.0;
        prob *= converted ? world.q[i] : 1.0 - world.q[i];
      }
      b.compute_errors();
      try {
        const double value = evaluate_estimator(b, id, lambda, nullptr);
        acc += prob * value;
        defined_mass += prob;
      } catch (const std::domain_error&) {
        out.undefined_patterns += 1;
        out.excluded_mass += prob;
      }
    }
  }
  if (defined_mass <= 0.0)
    throw std::domain_error("exact_expected_loss_marginal: estimator undefined everywhere");
  out.value = acc / defined_mass;
  return out;
}

std::vector<ReplicateStats> monte_carlo_stats(const SyntheticWorld& world,
                                              const StudyInputs& inputs,
                                              std::span<const double> realized_r,
                                              EstimatorId id,
                                              std::span<const double> lambda_grid,
                                              std::size_t replicates, std::uint64_t seed) {
  if (replicates < 100)
    throw std::invalid_argument("monte_carlo_stats: need at least 100 replicates");
  EstimatorBatch b = make_study_batch(world, inputs, realized_r);
  const double ideal = conditional_ideal(b);
  const std::size_t n = world.size();
  Rng master(seed);

  std::vector<ReplicateStats> all;
  all.reserve(lambda_grid.size());
  for (double lambda : lambda_grid) {
    ReplicateStats stats;
    stats.estimator = estimator_name(id);
    stats.lambda = lambda;
    ClampCounter clamp;
    std::vector<double> values;
    values.reserve(replicates);
    for (std::size_t rep = 0; rep < replicates; ++rep) {
      Rng rng = master.derive(rep);
      for (std::size_t i = 0; i < n; ++i) b.o[i] = rng.bernoulli(world.p[i]) ? 1.0 : 0.0;
      try {
        values.push_back(evaluate_estimator(b, id, lambda, &clamp));
      } catch (const std::domain_error&) {
        stats.undefined_replicates += 1;
      }
    }
    if (values.empty())
      throw std::domain_error("monte_carlo_stats: estimator undefined in every replicate");
    const double count = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= count;
    double m2 = 0.0, m4 = 0.0;
    for (double v : values) {
      const double dlt = v - mean;
      m2 += dlt * dlt;
      m4 += dlt * dlt * dlt * dlt;
    }
    const double variance = values.size() > 1 ? m2 / (count - 1.0) : 0.0;
    m2 /= count;
    m4 /= count;
    stats.mean_loss = mean;
    stats.bias = mean - ideal;
    stats.variance = variance;
    stats.ci_halfwidth = 1.959963984540054 * std::sqrt(variance / count);
    const double var_of_var = std::max(m4 - m2 * m2, 0.0) / count;
    stats.variance_ci_halfwidth = 1.959963984540054 * std::sqrt(var_of_var);
    stats.replicates = values.size();
    stats.clamp_events = clamp.events;
    all.push_back(std::move(stats));
  }
  return all;
}

void write_stats_csv(const std::string& path, const std::vector<ReplicateStats>& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_stats_csv: cannot open " + path);
  out << "estimator,lambda,bias,variance,ci_halfwidth,replicates,clamp_events\n";
  char buf[256];
  for (const ReplicateStats& s : stats) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%zu,%llu\n",
                  s.estimator.c_str(), s.lambda, s.bias, s.variance, s.ci_halfwidth,
                  s.replicates, static_cast<unsigned long long>(s.clamp_events));
    out << buf;
  }
}

}  // namespace egean
