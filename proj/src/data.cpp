#include "fttab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fttab/errors.hpp"
#include "fttab/random.hpp"

namespace fttab {

namespace {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

std::vector<CsvRecord> split_records(const std::string& text) {
  std::vector<CsvRecord> out;
  CsvRecord cur;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  cur.line = 1;
  auto end_record = [&] {
    cur.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
    const bool blank = cur.fields.size() == 1 && cur.fields[0].empty();
    if (!blank) out.push_back(std::move(cur));
    cur = CsvRecord{};
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = field_started = true;
    } else if (c == ',') {
      cur.fields.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
      cur.line = ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line);
  if (field_started || !field.empty() || !cur.fields.empty()) end_record();
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RawDataset RawDataset::subset(std::span<const std::size_t> indices) const {
  RawDataset out;
  out.columns = columns;
  for (std::size_t i : indices) {
    if (i >= rows()) throw IndexError("row " + std::to_string(i) + " out of range");
    out.cells.push_back(cells[i]);
    out.targets.push_back(targets[i]);
  }
  return out;
}

RawDataset parse_csv(const std::string& text, const std::string& target,
                     const std::vector<std::string>& categorical) {
  auto records = split_records(text);
  if (records.empty()) throw ParseError("empty CSV", 1);
  const auto& header = records.front().fields;
  std::vector<std::string> names;
  for (const auto& h : header) names.push_back(trim(h));

  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw SchemaError("duplicate column '" + n + "'");
  const auto target_it = std::find(names.begin(), names.end(), target);
  if (target_it == names.end()) throw SchemaError("target column '" + target + "' not found");
  for (const auto& c : categorical) {
    if (!seen.count(c)) throw SchemaError("categorical column '" + c + "' not found");
    if (c == target) throw SchemaError("target column '" + target + "' listed as categorical");
  }
  const auto target_pos = static_cast<std::size_t>(target_it - names.begin());

  RawDataset data;
  std::vector<std::size_t> feature_pos;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i == target_pos) continue;
    const bool cat = std::find(categorical.begin(), categorical.end(), names[i]) != categorical.end();
    data.columns.push_back({names[i], cat ? FeatureKind::categorical : FeatureKind::numerical});
    feature_pos.push_back(i);
  }

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != names.size()) {
      throw ParseError("expected " + std::to_string(names.size()) + " fields, found " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    }
    const std::string label = trim(rec.fields[target_pos]);
    if (is_missing_token(label)) throw ParseError("missing target value", rec.line);
    std::vector<Cell> row;
    row.reserve(feature_pos.size());
    for (std::size_t k = 0; k < feature_pos.size(); ++k) {
      const std::string raw = trim(rec.fields[feature_pos[k]]);
      if (is_missing_token(raw)) {
        row.emplace_back(std::monostate{});
      } else if (data.columns[k].kind == FeatureKind::categorical) {
        row.emplace_back(raw);
      } else if (auto v = parse_number(raw)) {
        row.emplace_back(*v);
      } else {
        row.emplace_back(std::monostate{});
      }
    }
    data.cells.push_back(std::move(row));
    data.targets.push_back(label);
  }
  if (data.rows() == 0) throw ParseError("CSV has a header but no data rows", records.front().line);
  if (class_vocabulary(data).size() < 2) throw SchemaError("target column needs at least two distinct classes");
  return data;
}

RawDataset load_csv(const std::filesystem::path& path, const std::string& target,
                    const std::vector<std::string>& categorical) {
  return parse_csv(read_file(path), target, categorical);
}

DatasetDescriptor parse_descriptor(const std::string& text, const std::filesystem::path& base_dir) {
  DatasetDescriptor d;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "name") {
      d.name = value;
    } else if (key == "csv") {
      d.csv = std::filesystem::path(value).is_absolute() ? std::filesystem::path(value) : base_dir / value;
    } else if (key == "target") {
      d.target = value;
    } else if (key == "categorical") {
      d.categorical = split_list(value);
    } else {
      throw ParseError("unknown descriptor key '" + key + "'", lineno);
    }
  }
  if (d.csv.empty()) throw SchemaError("descriptor has no csv entry");
  if (d.target.empty()) throw SchemaError("descriptor has no target entry");
  if (d.name.empty()) d.name = d.csv.stem().string();
  return d;
}

DatasetDescriptor load_descriptor(const std::filesystem::path& path) {
  return parse_descriptor(read_file(path), path.parent_path());
}

RawDataset load_dataset(const DatasetDescriptor& descriptor) {
  return load_csv(descriptor.csv, descriptor.target, descriptor.categorical);
}

FittedSchema fit_schema(const RawDataset& train) {
  if (train.rows() == 0) throw PreconditionError("fit_schema needs at least one training row");
  FittedSchema out;
  std::vector<std::vector<std::string>> vocabularies;
  for (std::size_t c = 0; c < train.columns.size(); ++c) {
    if (train.columns[c].kind == FeatureKind::categorical) {
      std::set<std::string> values;
      for (const auto& row : train.cells)
        if (const auto* s = std::get_if<std::string>(&row[c])) values.insert(*s);
      vocabularies.emplace_back(values.begin(), values.end());
    } else {
      double total = 0.0;
      std::size_t count = 0;
      for (const auto& row : train.cells)
        if (const auto* v = std::get_if<double>(&row[c])) {
          total += *v;
          ++count;
        }
      const double mean = count ? total / static_cast<double>(count) : 0.0;
      double sq = 0.0;
      for (const auto& row : train.cells)
        if (const auto* v = std::get_if<double>(&row[c])) sq += (*v - mean) * (*v - mean);
      double sd = count ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
      if (!(sd > 0.0)) sd = 1.0;
      out.stats.means.push_back(mean);
      out.stats.stds.push_back(sd);
    }
  }
  out.schema = FeatureSchema(train.columns, std::move(vocabularies));
  return out;
}

std::vector<std::string> class_vocabulary(const RawDataset& data) {
  std::set<std::string> names(data.targets.begin(), data.targets.end());
  return {names.begin(), names.end()};
}

EncodedDataset EncodedDataset::select(std::span<const std::size_t> indices) const {
  EncodedDataset out;
  out.rows = rows.select(indices);
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  out.num_classes = num_classes;
  out.schema = schema;
  return out;
}

EncodedDataset encode(const RawDataset& data, const FittedSchema& fitted, const std::vector<std::string>& classes) {
  const auto& schema = fitted.schema;
  if (data.columns.size() != schema.columns().size()) throw SchemaError("dataset columns do not match the schema");
  for (std::size_t c = 0; c < data.columns.size(); ++c) {
    if (data.columns[c].name != schema.columns()[c].name || data.columns[c].kind != schema.columns()[c].kind) {
      throw SchemaError("column '" + data.columns[c].name + "' does not match the schema");
    }
  }
  std::map<std::string, int> class_index;
  for (std::size_t i = 0; i < classes.size(); ++i) class_index[classes[i]] = static_cast<int>(i);

  // Offsets of each categorical block inside the token table.
  std::vector<std::size_t> offsets;
  std::size_t next = 1;
  for (std::size_t j = 0; j < schema.categorical_count(); ++j) {
    offsets.push_back(next);
    next += schema.vocabulary(j).size();
  }

  EncodedDataset out;
  out.schema = schema;
  out.num_classes = classes.size();
  auto& rows = out.rows;
  rows.count = data.rows();
  rows.numerical = schema.numerical_count();
  rows.categorical = schema.categorical_count();
  rows.num.reserve(rows.count * rows.numerical);
  rows.cat.reserve(rows.count * rows.categorical);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto& row = data.cells[r];
    for (std::size_t i = 0; i < rows.numerical; ++i) {
      const auto* v = std::get_if<double>(&row[schema.numerical_columns()[i]]);
      rows.num.push_back(v ? (*v - fitted.stats.means[i]) / fitted.stats.stds[i] : 0.0);
    }
    for (std::size_t j = 0; j < rows.categorical; ++j) {
      const auto* s = std::get_if<std::string>(&row[schema.categorical_columns()[j]]);
      const auto pos = s ? schema.position(j, *s) : std::nullopt;
      rows.cat.push_back(pos ? offsets[j] + *pos : CategoricalTokenTable::kNanRow);
    }
    const auto it = class_index.find(data.targets[r]);
    if (it == class_index.end()) throw SchemaError("unknown class label '" + data.targets[r] + "'");
    out.labels.push_back(it->second);
  }
  return out;
}

Split split_indices(std::size_t rows, std::uint64_t seed) {
  if (rows < 2) throw PreconditionError("split needs at least two rows");
  std::vector<std::size_t> order(rows);
  for (std::size_t i = 0; i < rows; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5117));
  for (std::size_t i = rows - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, 0, i)]);
  const std::size_t n_train = (rows + 1) / 2;
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

std::pair<RawDataset, RawDataset> split_train_test(const RawDataset& data, std::uint64_t seed) {
  const auto s = split_indices(data.rows(), seed);
  return {data.subset(s.train), data.subset(s.test)};
}

}  // namespace fttab
