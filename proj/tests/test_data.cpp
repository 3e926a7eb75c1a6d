#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "egean/data.hpp"

using namespace egean;

namespace {

DatasetSchema tiny_schema() {
  DatasetSchema s;
  s.fields = {{"user_id", 10, FieldSide::User},
              {"item_id", 8, FieldSide::Item},
              {"xu_0", 4, FieldSide::User},
              {"xi_0", 4, FieldSide::Item}};
  return s;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("schema offsets and header") {
  DatasetSchema s = tiny_schema();
  CHECK(s.total_vocab() == 26);
  CHECK(s.offset_of(0) == 0);
  CHECK(s.offset_of(1) == 10);
  CHECK(s.offset_of(3) == 22);
  CHECK(s.header() == "user_id,item_id,xu_0,xi_0,click,conversion");
  CHECK(s.user_field_ids() == std::vector<std::size_t>{0, 2});
  CHECK(s.item_field_ids() == std::vector<std::size_t>{1, 3});
}

TEST_CASE("well-formed file loads with matching manifest") {
  TempFile f("tiny_ok.csv");
  {
    std::ofstream out(f.path);
    out << "user_id,item_id,xu_0,xi_0,click,conversion\n";
    out << "1,2,0,3,1,1\n";
    out << "1,5,1,0,0,0\n";
    out << "3,2,2,1,1,0\n";
  }
  Dataset ds = load_dataset(f.path, tiny_schema());
  REQUIRE(ds.records.size() == 3);
  CHECK(ds.manifest.exposures == 3);
  CHECK(ds.manifest.users == 2);
  CHECK(ds.manifest.items == 2);
  CHECK(ds.manifest.clicks == 2);
  CHECK(ds.manifest.conversions == 1);
  CHECK(ds.manifest.vocab_sizes == std::vector<std::size_t>{10, 8, 4, 4});
  CHECK(ds.records[0].codes == std::vector<std::uint32_t>{1, 2, 0, 3});
}

TEST_CASE("validation failures carry line numbers") {
  SUBCASE("conversion without click") {
    TempFile f("tiny_funnel.csv");
    {
      std::ofstream out(f.path);
      out << "user_id,item_id,xu_0,xi_0,click,conversion\n";
      out << "1,2,0,3,1,0\n";
      out << "1,5,1,0,0,1\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(f.path, tiny_schema()),
                         doctest::Contains("line 3"), std::runtime_error);
  }
  SUBCASE("out-of-vocabulary code") {
    TempFile f("tiny_vocab.csv");
    {
      std::ofstream out(f.path);
      out << "user_id,item_id,xu_0,xi_0,click,conversion\n";
      out << "1,9,0,3,0,0\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(f.path, tiny_schema()),
                         doctest::Contains("line 2"), std::runtime_error);
  }
  SUBCASE("malformed cell") {
    TempFile f("tiny_malformed.csv");
    {
      std::ofstream out(f.path);
      out << "user_id,item_id,xu_0,xi_0,click,conversion\n";
      out << "1,x,0,3,0,0\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(f.path, tiny_schema()),
                         doctest::Contains("line 2"), std::runtime_error);
  }
  SUBCASE("header mismatch") {
    TempFile f("tiny_header.csv");
    {
      std::ofstream out(f.path);
      out << "user,item,click,conversion\n";
    }
    CHECK_THROWS_AS(load_dataset(f.path, tiny_schema()), std::runtime_error);
  }
}

TEST_CASE("save then load round-trips records and manifest") {
  DatasetSchema schema = tiny_schema();
  std::vector<InteractionRecord> records;
  Rng rng(8);
  for (int i = 0; i < 57; ++i) {
    InteractionRecord r;
    r.codes = {std::uint32_t(rng.uniform_index(10)), std::uint32_t(rng.uniform_index(8)),
               std::uint32_t(rng.uniform_index(4)), std::uint32_t(rng.uniform_index(4))};
    r.click = rng.bernoulli(0.5) ? 1 : 0;
    r.conversion = r.click && rng.bernoulli(0.3) ? 1 : 0;
    records.push_back(r);
  }
  TempFile f("tiny_roundtrip.csv");
  save_dataset(f.path, schema, records);
  Dataset ds = load_dataset(f.path, schema);
  CHECK(ds.records == records);
  CHECK(ds.manifest == compute_manifest(schema, records));
  // funnel invariant over the loaded data
  for (const InteractionRecord& r : ds.records)
    CHECK((r.conversion == 0 || r.click == 1));
}

TEST_CASE("batching: sizes, determinism, partition") {
  std::vector<InteractionRecord> records;
  for (int i = 0; i < 2050; ++i) {
    InteractionRecord r;
    r.codes = {std::uint32_t(i % 10), std::uint32_t(i % 8), 0, 0};
    r.click = i % 2;
    r.conversion = 0;
    records.push_back(r);
  }
  auto batches = make_batches(records, 1024, 77);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 1024);
  CHECK(batches[1].size() == 1024);
  CHECK(batches[2].size() == 2);

  auto again = make_batches(records, 1024, 77);
  for (std::size_t k = 0; k < 3; ++k) CHECK(batches[k].codes.idx == again[k].codes.idx);

  // union of batches is the input multiset
  std::map<std::vector<std::size_t>, int> seen;
  for (const Batch& b : batches)
    for (std::size_t r = 0; r < b.size(); ++r) {
      std::vector<std::size_t> row(b.codes.idx.begin() + r * 4,
                                   b.codes.idx.begin() + (r + 1) * 4);
      seen[row] += 1;
    }
  std::map<std::vector<std::size_t>, int> expected;
  for (const InteractionRecord& r : records)
    expected[{r.codes[0], r.codes[1], r.codes[2], r.codes[3]}] += 1;
  CHECK(seen == expected);

  CHECK_THROWS_AS(make_batches(records, 1, 0), std::invalid_argument);
}

TEST_CASE("in-batch negatives: counts, provenance, determinism") {
  DatasetSchema schema = tiny_schema();
  Batch batch;
  batch.codes.rows = 6;
  batch.codes.cols = 4;
  // distinct items so no negative can collide with a positive
  for (std::size_t r = 0; r < 6; ++r) {
    batch.codes.idx.insert(batch.codes.idx.end(), {r, r, r % 4, (r + 1) % 4});
    batch.click.push_back(1.0);
    batch.conversion.push_back(0.0);
  }
  Rng rng(5);
  ExposureBatch exp = in_batch_negatives(schema, batch, rng);
  CHECK(exp.codes.rows == 12);
  CHECK(exp.skipped_collisions == 0);
  std::size_t positives = 0;
  for (double label : exp.exposure) positives += label == 1.0 ? 1 : 0;
  CHECK(positives == 6);

  // negatives keep their user fields and take item fields from another row
  for (std::size_t r = 6; r < 12; ++r) {
    const std::size_t src = r - 6;
    CHECK(exp.codes.at(r, 0) == batch.codes.at(src, 0));  // user_id kept
    CHECK(exp.codes.at(r, 2) == batch.codes.at(src, 2));  // user feature kept
    CHECK(exp.codes.at(r, 1) != batch.codes.at(src, 1));  // item must differ
  }

  Rng rng2(5);
  ExposureBatch exp2 = in_batch_negatives(schema, batch, rng2);
  CHECK(exp.codes.idx == exp2.codes.idx);
}

TEST_CASE("negatives that always collide are skipped and counted") {
  DatasetSchema schema = tiny_schema();
  Batch batch;
  batch.codes.rows = 2;
  batch.codes.cols = 4;
  // both rows share the same item: every recombination is a known positive
  batch.codes.idx = {1, 3, 0, 0, 2, 3, 0, 0};
  // add the cross pairs as positives too
  batch.click = {1.0, 1.0};
  batch.conversion = {0.0, 0.0};
  Rng rng(9);
  ExposureBatch exp = in_batch_negatives(schema, batch, rng);
  CHECK(exp.skipped_collisions == 2);
  CHECK(exp.codes.rows == 2);  // only the positives survive
}

TEST_CASE("offset codes map into the shared table row space") {
  DatasetSchema schema = tiny_schema();
  IndexMatrix raw{1, 4, {3, 2, 1, 3}};
  IndexMatrix mapped = offset_codes(schema, raw);
  CHECK(mapped.idx == std::vector<std::size_t>{3, 12, 19, 25});
}
