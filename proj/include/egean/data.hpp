#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egean/rng.hpp"
#include "egean/tensor.hpp"

namespace egean {

enum class FieldSide { User, Item };

struct FieldSpec {
  std::string name;
  std::size_t vocab = 0;
  FieldSide side = FieldSide::User;
};

// Ordered categorical field layout of a dataset. Embedding lookups address a
// single table through per-field offsets (field f, code c -> offset(f) + c).
struct DatasetSchema {
  std::vector<FieldSpec> fields;

  std::size_t field_count() const { return fields.size(); }
  std::size_t total_vocab() const;
  std::size_t offset_of(std::size_t field) const;
  std::vector<std::size_t> user_field_ids() const;
  std::vector<std::size_t> item_field_ids() const;
  // CSV header: field names followed by click,conversion.
  std::string header() const;
};

// One impression: field codes plus the click/conversion funnel labels.
// conversion = 1 requires click = 1.
struct InteractionRecord {
  std::vector<std::uint32_t> codes;
  std::uint8_t click = 0;
  std::uint8_t conversion = 0;

  bool operator==(const InteractionRecord&) const = default;
};

struct DatasetManifest {
  std::size_t users = 0;      // distinct user_id codes observed
  std::size_t items = 0;      // distinct item_id codes observed
  std::size_t exposures = 0;  // record count
  std::size_t clicks = 0;
  std::size_t conversions = 0;
  std::vector<std::size_t> vocab_sizes;

  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetSchema schema;
  std::vector<InteractionRecord> records;
  DatasetManifest manifest;
};

// Streaming CSV parse with validation: every malformed line, funnel violation
// (conversion without click) or out-of-vocabulary code is rejected with its
// line number.
Dataset load_dataset(const std::string& path, const DatasetSchema& schema);

void save_dataset(const std::string& path, const DatasetSchema& schema,
                  const std::vector<InteractionRecord>& records);

DatasetManifest compute_manifest(const DatasetSchema& schema,
                                 const std::vector<InteractionRecord>& records);

// Contiguous training view of a record slice. codes holds raw per-field codes;
// offset_codes() maps them into the shared embedding table's row space.
struct Batch {
  IndexMatrix codes;  // batch_size x field_count, raw codes
  std::vector<double> click;
  std::vector<double> conversion;

  std::size_t size() const { return codes.rows; }
};

// Deterministic shuffle + split; the final partial batch is emitted.
// batch_size must be at least 2 (in-batch negatives need another row).
std::vector<Batch> make_batches(const std::vector<InteractionRecord>& records,
                                std::size_t batch_size, std::uint64_t shuffle_seed);

// Exposure-task batch: the originals labeled 1 followed by the synthetic
// negatives labeled 0.
struct ExposureBatch {
  IndexMatrix codes;
  std::vector<double> exposure;
  std::size_t skipped_collisions = 0;
};

// For every row, pairs its user-side fields with the item-side fields of a
// uniformly chosen different row. A negative that collides with a positive
// (user,item) pair already in the batch is re-sampled a bounded number of
// times, then skipped and counted.
ExposureBatch in_batch_negatives(const DatasetSchema& schema, const Batch& batch, Rng& rng);

// Maps raw field codes into shared-table row indices by adding field offsets.
IndexMatrix offset_codes(const DatasetSchema& schema, const IndexMatrix& raw);

}  // namespace egean
