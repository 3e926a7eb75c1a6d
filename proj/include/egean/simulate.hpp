#pragma once

#include <cstdint>

#include "egean/data.hpp"
#include "egean/synthetic.hpp"
#include "egean/train.hpp"

namespace egean {

// Dataset synthesis knobs on top of WorldSpec: pseudo user/item ids and the
// bucketization of the continuous features into categorical codes.
struct SimulateConfig {
  std::size_t n_users = 1000;
  std::size_t n_items = 1000;
  std::size_t n_buckets = 16;
  // magnitudes of the auto-derived weight vectors (used when the world spec
  // does not list them explicitly)
  double propensity_scale = 1.0;
  double cvr_scale = 1.5;
};

struct SimulatedDataset {
  Dataset dataset;
  TruthSidecar truth;
};

// Turns a continuous-feature world into a categorical interaction log:
// noise user/item ids, features bucketized on a fixed [-3, 3] grid, click = o
// and conversion = o AND r (the observable funnel). The sidecar keeps the
// true p, q and realized r per pair in record order.
SimulatedDataset simulate_dataset(const SyntheticWorld& world, const SimulateConfig& sim);

}  // namespace egean
