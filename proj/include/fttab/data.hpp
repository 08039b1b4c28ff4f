#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fttab/feature_tokenizer.hpp"

namespace fttab {

// A parsed cell: missing, a number, or a string.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool cell_missing(const Cell& c) { return std::holds_alternative<std::monostate>(c); }

struct RawDataset {
  std::vector<ColumnSpec> columns;        // feature columns in file order
  std::vector<std::vector<Cell>> cells;   // row-major, one entry per feature column
  std::vector<std::string> targets;       // raw class label per row

  std::size_t rows() const { return targets.size(); }
  RawDataset subset(std::span<const std::size_t> indices) const;
};

/// Parses CSV text. Quoted fields may contain commas, newlines and doubled
/// quotes. Cells in numeric columns that are sentinels or do not parse as a
/// number become missing; sentinels in categorical columns become missing.
RawDataset parse_csv(const std::string& text, const std::string& target,
                     const std::vector<std::string>& categorical);
RawDataset load_csv(const std::filesystem::path& path, const std::string& target,
                    const std::vector<std::string>& categorical);

// Names the CSV file (relative to the descriptor), its target and its
// categorical columns. Text format: one key = value per line, '#' comments.
struct DatasetDescriptor {
  std::string name;
  std::filesystem::path csv;
  std::string target;
  std::vector<std::string> categorical;
};

DatasetDescriptor parse_descriptor(const std::string& text, const std::filesystem::path& base_dir);
DatasetDescriptor load_descriptor(const std::filesystem::path& path);
RawDataset load_dataset(const DatasetDescriptor& descriptor);

struct NormalizationStats {
  std::vector<double> means;  // per numerical column
  std::vector<double> stds;   // population std, 1 for constant columns
};

struct FittedSchema {
  FeatureSchema schema;
  NormalizationStats stats;
};

/// Vocabularies (sorted, training rows only) and numerical statistics.
FittedSchema fit_schema(const RawDataset& train);

/// Sorted distinct target labels.
std::vector<std::string> class_vocabulary(const RawDataset& data);

struct EncodedDataset {
  EncodedRows rows;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  FeatureSchema schema;

  EncodedDataset select(std::span<const std::size_t> indices) const;
};

/// Missing numerics take the training mean (encoded 0); unseen or missing
/// categories map to table row 0. Labels outside `classes` are an error.
EncodedDataset encode(const RawDataset& data, const FittedSchema& fitted, const std::vector<std::string>& classes);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded uniform shuffle, then the first ceil(n/2) rows train.
Split split_indices(std::size_t rows, std::uint64_t seed);
std::pair<RawDataset, RawDataset> split_train_test(const RawDataset& data, std::uint64_t seed);

}  // namespace fttab
