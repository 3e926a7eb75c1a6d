#include "egean/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace egean {

std::size_t DatasetSchema::total_vocab() const {
  std::size_t n = 0;
  for (const FieldSpec& f : fields) n += f.vocab;
  return n;
}

std::size_t DatasetSchema::offset_of(std::size_t field) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < field; ++i) off += fields[i].vocab;
  return off;
}

std::vector<std::size_t> DatasetSchema::user_field_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (fields[i].side == FieldSide::User) ids.push_back(i);
  return ids;
}

std::vector<std::size_t> DatasetSchema::item_field_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (fields[i].side == FieldSide::Item) ids.push_back(i);
  return ids;
}

std::string DatasetSchema::header() const {
  std::string h;
  for (const FieldSpec& f : fields) {
    h += f.name;
    h += ',';
  }
  h += "click,conversion";
  return h;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::uint64_t parse_code(const std::string& s, std::size_t line_no, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("line " + std::to_string(line_no) + ": malformed " + what +
                             " value '" + s + "'");
  return v;
}

}  // namespace

DatasetManifest compute_manifest(const DatasetSchema& schema,
                                 const std::vector<InteractionRecord>& records) {
  DatasetManifest m;
  std::set<std::uint32_t> users, items;
  const auto user_ids = schema.user_field_ids();
  const auto item_ids = schema.item_field_ids();
  const std::size_t user_id_field = user_ids.empty() ? 0 : user_ids.front();
  const std::size_t item_id_field = item_ids.empty() ? 0 : item_ids.front();
  for (const InteractionRecord& r : records) {
    users.insert(r.codes[user_id_field]);
    items.insert(r.codes[item_id_field]);
    m.exposures += 1;
    m.clicks += r.click;
    m.conversions += r.conversion;
  }
  m.users = users.size();
  m.items = items.size();
  for (const FieldSpec& f : schema.fields) m.vocab_sizes.push_back(f.vocab);
  return m;
}

Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file " + path);
  // header check
  {
    std::string got = line;
    if (!got.empty() && got.back() == '\r') got.pop_back();
    if (got != schema.header())
      throw std::runtime_error("load_dataset: header does not match schema (got '" + got +
                               "')");
  }
  Dataset ds;
  ds.schema = schema;
  const std::size_t f_count = schema.field_count();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != f_count + 2)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(f_count + 2) + " columns, got " +
                               std::to_string(cells.size()));
    InteractionRecord rec;
    rec.codes.resize(f_count);
    for (std::size_t f = 0; f < f_count; ++f) {
      const std::uint64_t code = parse_code(cells[f], line_no, schema.fields[f].name);
      if (code >= schema.fields[f].vocab)
        throw std::runtime_error("line " + std::to_string(line_no) + ": field '" +
                                 schema.fields[f].name + "' code " + std::to_string(code) +
                                 " outside vocabulary of " +
                                 std::to_string(schema.fields[f].vocab));
      rec.codes[f] = static_cast<std::uint32_t>(code);
    }
    const std::uint64_t click = parse_code(cells[f_count], line_no, "click");
    const std::uint64_t conv = parse_code(cells[f_count + 1], line_no, "conversion");
    if (click > 1 || conv > 1)
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": click/conversion must be 0 or 1");
    if (conv == 1 && click == 0)
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": conversion without click violates the funnel");
    rec.click = static_cast<std::uint8_t>(click);
    rec.conversion = static_cast<std::uint8_t>(conv);
    ds.records.push_back(std::move(rec));
  }
  ds.manifest = compute_manifest(schema, ds.records);
  return ds;
}

void save_dataset(const std::string& path, const DatasetSchema& schema,
                  const std::vector<InteractionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << schema.header() << '\n';
  for (const InteractionRecord& r : records) {
    for (std::uint32_t c : r.codes) out << c << ',';
    out << int(r.click) << ',' << int(r.conversion) << '\n';
  }
}

std::vector<Batch> make_batches(const std::vector<InteractionRecord>& records,
                                std::size_t batch_size, std::uint64_t shuffle_seed) {
  if (batch_size < 2)
    throw std::invalid_argument("make_batches: batch_size must be at least 2");
  if (records.empty()) return {};
  const std::size_t f_count = records.front().codes.size();

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(shuffle_seed).derive("batch-shuffle");
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    Batch b;
    b.codes.rows = count;
    b.codes.cols = f_count;
    b.codes.idx.resize(count * f_count);
    b.click.resize(count);
    b.conversion.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      const InteractionRecord& r = records[order[start + k]];
      for (std::size_t f = 0; f < f_count; ++f) b.codes.idx[k * f_count + f] = r.codes[f];
      b.click[k] = r.click;
      b.conversion[k] = r.conversion;
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

ExposureBatch in_batch_negatives(const DatasetSchema& schema, const Batch& batch, Rng& rng) {
  const std::size_t n = batch.size();
  if (n < 2) throw std::invalid_argument("in_batch_negatives: need at least 2 rows");
  const std::size_t f_count = schema.field_count();
  const auto item_fields = schema.item_field_ids();
  const auto user_ids = schema.user_field_ids();
  const auto first_user = user_ids.empty() ? 0 : user_ids.front();
  const auto first_item = item_fields.empty() ? 0 : item_fields.front();

  // (user_id, item_id) pairs present as positives in this batch
  std::set<std::pair<std::size_t, std::size_t>> positives;
  for (std::size_t r = 0; r < n; ++r)
    positives.insert({batch.codes.at(r, first_user), batch.codes.at(r, first_item)});

  ExposureBatch out;
  out.codes.cols = f_count;
  out.codes.idx.reserve(2 * n * f_count);
  // positives first
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < f_count; ++f) out.codes.idx.push_back(batch.codes.at(r, f));
    out.exposure.push_back(1.0);
  }
  constexpr int kMaxRetries = 16;
  for (std::size_t r = 0; r < n; ++r) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRetries && !placed; ++attempt) {
      std::size_t other = rng.uniform_index(n - 1);
      if (other >= r) ++other;  // uniform over rows != r
      const auto key = std::make_pair(batch.codes.at(r, first_user),
                                      batch.codes.at(other, first_item));
      if (positives.count(key)) continue;
      for (std::size_t f = 0; f < f_count; ++f) {
        const bool item_side = schema.fields[f].side == FieldSide::Item;
        out.codes.idx.push_back(batch.codes.at(item_side ? other : r, f));
      }
      out.exposure.push_back(0.0);
      placed = true;
    }
    if (!placed) out.skipped_collisions += 1;
  }
  out.codes.rows = out.exposure.size();
  return out;
}

IndexMatrix offset_codes(const DatasetSchema& schema, const IndexMatrix& raw) {
  IndexMatrix out = raw;
  std::vector<std::size_t> offsets(schema.field_count());
  for (std::size_t f = 0; f < offsets.size(); ++f) offsets[f] = schema.offset_of(f);
  for (std::size_t r = 0; r < raw.rows; ++r)
    for (std::size_t f = 0; f < raw.cols; ++f) out.idx[r * raw.cols + f] += offsets[f];
  return out;
}

}  // namespace egean
