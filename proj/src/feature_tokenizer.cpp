#include "fttab/feature_tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "fttab/errors.hpp"
#include "fttab/ops.hpp"

namespace fttab {

bool is_missing_token(std::string_view cell) {
  return cell.empty() || cell == "?" || cell == "NaN" || cell == "nan";
}

FeatureSchema::FeatureSchema(std::vector<ColumnSpec> columns, std::vector<std::vector<std::string>> vocabularies)
    : columns_(std::move(columns)), vocabularies_(std::move(vocabularies)) {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    (columns_[c].kind == FeatureKind::numerical ? numerical_ : categorical_).push_back(c);
  }
  if (vocabularies_.size() != categorical_.size()) {
    throw SchemaError("schema has " + std::to_string(categorical_.size()) + " categorical columns but " +
                      std::to_string(vocabularies_.size()) + " vocabularies");
  }
  lookup_.resize(vocabularies_.size());
  for (std::size_t j = 0; j < vocabularies_.size(); ++j) {
    for (std::size_t k = 0; k < vocabularies_[j].size(); ++k) {
      const auto& value = vocabularies_[j][k];
      if (is_missing_token(value)) {
        throw SchemaError("vocabulary of column '" + columns_[categorical_[j]].name + "' contains a missing-value token");
      }
      if (!lookup_[j].emplace(value, k).second) {
        throw SchemaError("duplicate value '" + value + "' in vocabulary of column '" +
                          columns_[categorical_[j]].name + "'");
      }
    }
  }
}

const std::vector<std::string>& FeatureSchema::vocabulary(std::size_t j) const {
  if (j >= vocabularies_.size()) throw IndexError("categorical column " + std::to_string(j) + " out of range");
  return vocabularies_[j];
}

std::optional<std::size_t> FeatureSchema::position(std::size_t j, std::string_view value) const {
  if (j >= lookup_.size()) throw IndexError("categorical column " + std::to_string(j) + " out of range");
  auto it = lookup_[j].find(std::string(value));
  if (it == lookup_[j].end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureSchema::total_categories() const {
  std::size_t n = 0;
  for (const auto& v : vocabularies_) n += v.size();
  return n;
}

CategoricalTokenTable::CategoricalTokenTable(Tensor weights, std::vector<std::size_t> offsets,
                                             std::vector<std::size_t> sizes)
    : weights_(std::move(weights)), offsets_(std::move(offsets)), sizes_(std::move(sizes)) {
  if (weights_.rank() != 2) throw DimensionError("category table must be a matrix");
  if (offsets_.size() != sizes_.size()) throw SchemaError("category table offsets and sizes disagree");
  std::size_t expected = 1;
  for (std::size_t j = 0; j < offsets_.size(); ++j) {
    if (offsets_[j] != expected) throw SchemaError("category table offsets must partition rows 1..N contiguously");
    expected += sizes_[j];
  }
  if (expected != weights_.rows()) {
    throw SchemaError("category table has " + std::to_string(weights_.rows()) + " rows, expected " +
                      std::to_string(expected));
  }
}

CategoricalTokenTable CategoricalTokenTable::initialize(const FeatureSchema& schema, std::size_t d, Rng& rng,
                                                        bool requires_grad) {
  std::vector<std::size_t> counts;
  for (const auto& v : schema.vocabularies()) counts.push_back(v.size());
  return initialize(counts, d, rng, requires_grad);
}

CategoricalTokenTable CategoricalTokenTable::initialize(std::span<const std::size_t> category_counts, std::size_t d,
                                                        Rng& rng, bool requires_grad) {
  std::vector<std::size_t> offsets, sizes(category_counts.begin(), category_counts.end());
  std::size_t next = 1;
  for (auto c : category_counts) {
    offsets.push_back(next);
    next += c;
  }
  Tensor w({next, d});
  fill_normal(w.data().subspan(d), 1.0 / std::sqrt(static_cast<double>(d)), rng);
  w.set_requires_grad(requires_grad);
  return CategoricalTokenTable(std::move(w), std::move(offsets), std::move(sizes));
}

NamedParameter CategoricalTokenTable::parameter(std::string name) const {
  return NamedParameter{std::move(name), weights_, {kNanRow}};
}

FeatureIdentifiers FeatureIdentifiers::initialize(std::size_t m, std::size_t d, Rng& rng, bool requires_grad) {
  Tensor w({m, d});
  fill_normal(w.data(), 1.0 / std::sqrt(static_cast<double>(d)), rng);
  w.set_requires_grad(requires_grad);
  return FeatureIdentifiers{std::move(w)};
}

Tensor tokenize_numerical(double value, std::size_t column, const Tensor& numerical_weights) {
  if (column >= numerical_weights.rows()) {
    throw IndexError("numerical column " + std::to_string(column) + " out of range for " +
                     std::to_string(numerical_weights.rows()) + " columns");
  }
  if (!std::isfinite(value)) throw NumericError("non-finite numerical feature value in column " + std::to_string(column));
  return scale(row(numerical_weights, column), value);
}

std::size_t map_category(const CategoricalValue& raw, std::size_t column, const FeatureSchema& schema,
                         const CategoricalTokenTable& table) {
  if (column >= schema.categorical_count()) {
    throw IndexError("categorical column " + std::to_string(column) + " out of range");
  }
  if (!raw || is_missing_token(*raw)) return CategoricalTokenTable::kNanRow;
  auto pos = schema.position(column, *raw);
  if (!pos) return CategoricalTokenTable::kNanRow;
  return table.offsets()[column] + *pos;
}

Tensor tokenize_category_index(std::size_t table_row, std::size_t column, const CategoricalTokenTable& table,
                               const FeatureIdentifiers* ids) {
  Tensor token = row(table.weights(), table_row);
  if (ids) {
    if (column >= ids->count()) throw IndexError("identifier row " + std::to_string(column) + " out of range");
    token = add(token, row(ids->weights, column));
  }
  return token;
}

Tensor tokenize_categorical(const CategoricalValue& raw, std::size_t column, const CategoricalTokenTable& table,
                            const FeatureIdentifiers* ids, const FeatureSchema& schema) {
  return tokenize_category_index(map_category(raw, column, schema, table), column, table, ids);
}

Tensor aggregate_tokens(std::span<const Tensor> tokens) {
  if (tokens.empty()) throw PreconditionError("aggregate_tokens needs at least one token");
  for (const auto& t : tokens) {
    if (t.rank() != 1 || t.numel() != tokens.front().numel()) {
      throw DimensionError("token of shape " + shape_string(t.shape()) + " does not match " +
                           shape_string(tokens.front().shape()));
    }
  }
  return ordered_sum(tokens);
}

Tensor orthogonal_loss(const Tensor& identifiers) {
  if (identifiers.rank() != 2 || identifiers.rows() == 0) {
    throw PreconditionError("orthogonal_loss needs at least one identifier row");
  }
  if (identifiers.rows() == 1) return Tensor::scalar(0.0);
  return offdiag_square_sum(cosine_gram(identifiers, kIdentifierNormGuard));
}

Matrix category_gram_matrix(const CategoricalTokenTable& table) {
  const auto& w = table.weights();
  const std::size_t r = w.rows(), d = w.cols();
  Matrix g{r, r, std::vector<double>(r * r)};
  auto src = w.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += src[i * d + k] * src[j * d + k];
      g.values[i * r + j] = s;
      g.values[j * r + i] = s;
    }
  }
  return g;
}

Matrix identifier_gram_matrix(const FeatureIdentifiers& ids) {
  const auto& w = ids.weights;
  if (w.rank() != 2 || w.rows() == 0) throw PreconditionError("identifier_gram_matrix needs m >= 1");
  NoGradGuard guard;
  const Tensor g = cosine_gram(w, kIdentifierNormGuard);
  return {w.rows(), w.rows(), {g.data().begin(), g.data().end()}};
}

double mean_abs_offdiag(const Matrix& m) {
  if (m.rows < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      if (i != j) total += std::abs(m(i, j));
  return total / static_cast<double>(m.rows * (m.rows - 1));
}

std::string matrix_to_csv(const Matrix& m) {
  std::string out = "index";
  for (std::size_t c = 0; c < m.cols; ++c) out += "," + std::to_string(c);
  out += '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.rows; ++r) {
    out += std::to_string(r);
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Matrix matrix_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  Matrix m;
  if (!std::getline(in, line)) throw ParseError("empty matrix CSV");
  m.cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    std::size_t read = 0;
    while (std::getline(cells, cell, ',')) {
      m.values.push_back(std::stod(cell));
      ++read;
    }
    if (read != m.cols) throw ParseError("matrix CSV row has " + std::to_string(read) + " values", line_no);
    ++m.rows;
  }
  return m;
}

EncodedRows EncodedRows::select(std::span<const std::size_t> indices) const {
  EncodedRows out;
  out.count = indices.size();
  out.numerical = numerical;
  out.categorical = categorical;
  out.num.reserve(indices.size() * numerical);
  out.cat.reserve(indices.size() * categorical);
  for (auto r : indices) {
    if (r >= count) throw IndexError("row " + std::to_string(r) + " out of range");
    out.num.insert(out.num.end(), num.begin() + static_cast<std::ptrdiff_t>(r * numerical),
                   num.begin() + static_cast<std::ptrdiff_t>((r + 1) * numerical));
    out.cat.insert(out.cat.end(), cat.begin() + static_cast<std::ptrdiff_t>(r * categorical),
                   cat.begin() + static_cast<std::ptrdiff_t>((r + 1) * categorical));
  }
  return out;
}

FeatureTokenizer::FeatureTokenizer(Tensor numerical_weights, CategoricalTokenTable table,
                                   std::optional<FeatureIdentifiers> ids)
    : numerical_weights_(std::move(numerical_weights)), table_(std::move(table)), ids_(std::move(ids)) {
  if (numerical_weights_.rank() != 2) throw DimensionError("numerical weights must be a matrix");
  if (table_.dim() != numerical_weights_.cols()) throw DimensionError("token table width differs from numerical weights");
  if (ids_) {
    if (ids_->weights.rank() != 2 || ids_->weights.cols() != dim() || ids_->count() != table_.offsets().size()) {
      throw DimensionError("identifiers must be [m, d] with one row per categorical column");
    }
  }
}

Tensor FeatureTokenizer::embed(const EncodedRows& rows) const {
  const std::size_t n = rows.numerical, m = rows.categorical, d = dim();
  if (n != numerical_weights_.rows()) {
    throw SchemaError("rows carry " + std::to_string(n) + " numerical features, layer expects " +
                      std::to_string(numerical_weights_.rows()));
  }
  if (m != table_.offsets().size()) {
    throw SchemaError("rows carry " + std::to_string(m) + " categorical features, layer expects " +
                      std::to_string(table_.offsets().size()));
  }
  if (n + m == 0) throw PreconditionError("cannot embed rows with no features");
  if (!all_finite(rows.num)) throw NumericError("non-finite numerical feature value");
  for (std::size_t r = 0; r < rows.count; ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t idx = rows.cat[r * m + j];
      const bool in_block = idx == CategoricalTokenTable::kNanRow ||
                            (idx >= table_.offsets()[j] && idx < table_.offsets()[j] + table_.sizes()[j]);
      if (!in_block) throw IndexError("table row " + std::to_string(idx) + " is outside column " + std::to_string(j));
    }
  }

  auto wn = numerical_weights_.data();
  auto wc = table_.weights().data();
  const double* id = ids_ ? ids_->weights.data().data() : nullptr;
  std::vector<double> out(rows.count * d);
  std::vector<double> column(n + m);
  for (std::size_t r = 0; r < rows.count; ++r) {
    const double* x = rows.num.data() + r * n;
    const std::size_t* c = rows.cat.data() + r * m;
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < n; ++i) column[i] = x[i] * wn[i * d + k];
      for (std::size_t j = 0; j < m; ++j) {
        column[n + j] = id ? wc[c[j] * d + k] + id[j * d + k] : wc[c[j] * d + k];
      }
      std::sort(column.begin(), column.end());
      double acc = 0.0;
      for (double v : column) acc += v;
      out[r * d + k] = acc;
    }
  }

  std::vector<Tensor> parents{numerical_weights_, table_.weights()};
  if (ids_) parents.push_back(ids_->weights);
  return make_result(
      {rows.count, d}, std::move(out), std::move(parents),
      [rows, n, m, d, with_ids = ids_.has_value()](detail::Node& self) {
        const auto& g = self.grad;
        auto& pn = *self.parents[0];
        auto& pc = *self.parents[1];
        if (pn.requires_grad) {
          auto gb = pn.grad_buffer();
          for (std::size_t r = 0; r < rows.count; ++r)
            for (std::size_t i = 0; i < n; ++i) {
              const double x = rows.num[r * n + i];
              for (std::size_t k = 0; k < d; ++k) gb[i * d + k] += x * g[r * d + k];
            }
        }
        if (pc.requires_grad) {
          auto gb = pc.grad_buffer();
          for (std::size_t r = 0; r < rows.count; ++r)
            for (std::size_t j = 0; j < m; ++j) {
              const std::size_t idx = rows.cat[r * m + j];
              if (idx == CategoricalTokenTable::kNanRow) continue;
              for (std::size_t k = 0; k < d; ++k) gb[idx * d + k] += g[r * d + k];
            }
        }
        if (with_ids && self.parents[2]->requires_grad) {
          auto gb = self.parents[2]->grad_buffer();
          for (std::size_t r = 0; r < rows.count; ++r)
            for (std::size_t j = 0; j < m; ++j)
              for (std::size_t k = 0; k < d; ++k) gb[j * d + k] += g[r * d + k];
        }
      },
      "feature_tokenize");
}

ParameterList FeatureTokenizer::parameters() const {
  ParameterList params;
  params.push_back({"ft.numerical_weights", numerical_weights_, {}});
  params.push_back(table_.parameter());
  if (ids_) params.push_back({"ft.identifiers", ids_->weights, {}});
  return params;
}

}  // namespace fttab
