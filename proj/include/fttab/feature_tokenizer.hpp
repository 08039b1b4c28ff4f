#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fttab/optim.hpp"
#include "fttab/random.hpp"
#include "fttab/tensor.hpp"

namespace fttab {

enum class FeatureKind { numerical, categorical };

struct ColumnSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numerical;
};

// A raw categorical cell; std::nullopt is a missing value.
using CategoricalValue = std::optional<std::string>;

// Cell spellings treated as missing: "", "?", "NaN", "nan".
bool is_missing_token(std::string_view cell);

/// Column layout of one dataset: which columns are numerical, which are
/// categorical, and the training vocabulary of every categorical column.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<ColumnSpec> columns, std::vector<std::vector<std::string>> vocabularies);

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  std::size_t numerical_count() const { return numerical_.size(); }
  std::size_t categorical_count() const { return categorical_.size(); }
  // Positions in columns() of the numerical / categorical columns, in order.
  const std::vector<std::size_t>& numerical_columns() const { return numerical_; }
  const std::vector<std::size_t>& categorical_columns() const { return categorical_; }

  const std::vector<std::string>& vocabulary(std::size_t j) const;
  const std::vector<std::vector<std::string>>& vocabularies() const { return vocabularies_; }
  std::optional<std::size_t> position(std::size_t j, std::string_view value) const;
  // N: category count summed over all categorical columns.
  std::size_t total_categories() const;

 private:
  std::vector<ColumnSpec> columns_;
  std::vector<std::vector<std::string>> vocabularies_;
  std::vector<std::unordered_map<std::string, std::size_t>> lookup_;
  std::vector<std::size_t> numerical_;
  std::vector<std::size_t> categorical_;
};

/// Lookup table for categorical tokens: row 0 is the NaN token, then one
/// contiguous block of rows per categorical column.
class CategoricalTokenTable {
 public:
  static constexpr std::size_t kNanRow = 0;

  CategoricalTokenTable() = default;
  CategoricalTokenTable(Tensor weights, std::vector<std::size_t> offsets, std::vector<std::size_t> sizes);

  // Zero-mean normal rows with std 1/sqrt(d); row 0 zero.
  static CategoricalTokenTable initialize(const FeatureSchema& schema, std::size_t d, Rng& rng,
                                          bool requires_grad = true);
  static CategoricalTokenTable initialize(std::span<const std::size_t> category_counts, std::size_t d, Rng& rng,
                                          bool requires_grad = true);

  const Tensor& weights() const { return weights_; }
  Tensor& weights() { return weights_; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t rows() const { return weights_.rows(); }
  std::size_t dim() const { return weights_.cols(); }
  NamedParameter parameter(std::string name = "ft.category_table") const;

 private:
  Tensor weights_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> sizes_;
};

// Per-categorical-column identifier vectors I [m, d].
struct FeatureIdentifiers {
  Tensor weights;

  static FeatureIdentifiers initialize(std::size_t m, std::size_t d, Rng& rng, bool requires_grad = true);
  std::size_t count() const { return weights.rows(); }
};

// Row-major dense matrix for exports.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// T_i = f_i * W_num[i]. No gradient reaches a frozen W_num.
Tensor tokenize_numerical(double value, std::size_t column, const Tensor& numerical_weights);

/// Index function g: missing or unseen values map to the NaN row 0, a known
/// value to offsets[j] + its vocabulary position.
std::size_t map_category(const CategoricalValue& raw, std::size_t column, const FeatureSchema& schema,
                         const CategoricalTokenTable& table);

/// T_j = W_cat[g(f_j)] + I_j (identifier omitted when ids is null).
Tensor tokenize_categorical(const CategoricalValue& raw, std::size_t column, const CategoricalTokenTable& table,
                            const FeatureIdentifiers* ids, const FeatureSchema& schema);
Tensor tokenize_category_index(std::size_t table_row, std::size_t column, const CategoricalTokenTable& table,
                               const FeatureIdentifiers* ids);

/// Sample embedding: elementwise sum of the feature tokens, independent of
/// token order (see ordered_sum).
Tensor aggregate_tokens(std::span<const Tensor> tokens);

inline constexpr double kIdentifierNormGuard = 1e-12;

/// Sum over ordered pairs i != j of squared cosine similarity between
/// identifier rows. Zero for m <= 1.
Tensor orthogonal_loss(const Tensor& identifiers);
inline Tensor orthogonal_loss(const FeatureIdentifiers& ids) { return orthogonal_loss(ids.weights); }

/// Inner products of all table rows, (N+1) x (N+1).
Matrix category_gram_matrix(const CategoricalTokenTable& table);
/// Cosine similarities of identifier rows, m x m.
Matrix identifier_gram_matrix(const FeatureIdentifiers& ids);
/// Mean absolute off-diagonal entry; 0 for matrices smaller than 2x2.
double mean_abs_offdiag(const Matrix& m);

// CSV with a header row of column indices; each line starts with its row index.
std::string matrix_to_csv(const Matrix& m);
Matrix matrix_from_csv(std::string_view text);

/// One batch of encoded rows: numerical values and categorical table indices.
struct EncodedRows {
  std::size_t count = 0;
  std::size_t numerical = 0;
  std::size_t categorical = 0;
  std::vector<double> num;       // count x numerical
  std::vector<std::size_t> cat;  // count x categorical, rows of the token table

  EncodedRows select(std::span<const std::size_t> indices) const;
};

/// Feature tokenization layer: replaces the dense input embedding with
/// per-feature tokens summed into one sample embedding.
class FeatureTokenizer {
 public:
  FeatureTokenizer() = default;
  FeatureTokenizer(Tensor numerical_weights, CategoricalTokenTable table, std::optional<FeatureIdentifiers> ids);

  const Tensor& numerical_weights() const { return numerical_weights_; }
  const CategoricalTokenTable& table() const { return table_; }
  CategoricalTokenTable& table() { return table_; }
  const FeatureIdentifiers* identifiers() const { return ids_ ? &*ids_ : nullptr; }
  FeatureIdentifiers* identifiers() { return ids_ ? &*ids_ : nullptr; }
  std::size_t dim() const { return numerical_weights_.cols(); }

  /// Sample embeddings for every row, [count, d]. Equivalent to
  /// aggregate_tokens over the tokenize_* results of each row.
  Tensor embed(const EncodedRows& rows) const;

  ParameterList parameters() const;

 private:
  Tensor numerical_weights_;
  CategoricalTokenTable table_;
  std::optional<FeatureIdentifiers> ids_;
};

}  // namespace fttab
