#include "egean/simulate.hpp"

#include <algorithm>
#include <cmath>

namespace egean {

SimulatedDataset simulate_dataset(const SyntheticWorld& world, const SimulateConfig& sim) {
  const std::uint64_t seed = world.spec.seed;
  ObservationSample obs = sample_observations(world, Rng(seed).derive("dataset").seed());

  const std::size_t d = world.spec.feature_dim;
  const std::size_t user_dims = (d + 1) / 2;
  SimulatedDataset out;
  DatasetSchema& schema = out.dataset.schema;
  schema.fields.push_back({"user_id", sim.n_users, FieldSide::User});
  schema.fields.push_back({"item_id", sim.n_items, FieldSide::Item});
  for (std::size_t c = 0; c < d; ++c) {
    const bool user_side = c < user_dims;
    schema.fields.push_back({(user_side ? "xu_" : "xi_") + std::to_string(c),
                             sim.n_buckets,
                             user_side ? FieldSide::User : FieldSide::Item});
  }

  Rng uid_rng = Rng(seed).derive("user-ids");
  Rng iid_rng = Rng(seed).derive("item-ids");
  const double n_buckets = static_cast<double>(sim.n_buckets);
  out.dataset.records.reserve(world.size());
  for (std::size_t i = 0; i < world.size(); ++i) {
    InteractionRecord rec;
    rec.codes.push_back(static_cast<std::uint32_t>(uid_rng.uniform_index(sim.n_users)));
    rec.codes.push_back(static_cast<std::uint32_t>(iid_rng.uniform_index(sim.n_items)));
    for (std::size_t c = 0; c < d; ++c) {
      // fixed [-3, 3] grid over the standard-normal features
      const double x = world.features[i * d + c];
      double code = std::floor((x + 3.0) / 6.0 * n_buckets);
      code = std::max(0.0, std::min(code, n_buckets - 1.0));
      rec.codes.push_back(static_cast<std::uint32_t>(code));
    }
    rec.click = obs.oracle.o[i] != 0.0 ? 1 : 0;
    rec.conversion = (rec.click && obs.oracle.r[i] != 0.0) ? 1 : 0;
    out.dataset.records.push_back(std::move(rec));
  }
  out.dataset.manifest = compute_manifest(schema, out.dataset.records);
  out.truth = TruthSidecar{world.p, world.q, obs.oracle.r};
  return out;
}

}  // namespace egean
