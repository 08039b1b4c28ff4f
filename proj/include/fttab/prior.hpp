#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fttab/feature_tokenizer.hpp"

namespace fttab {

enum class TaskFamily { linear, mlp, rule };

std::string family_name(TaskFamily f);

struct PriorConfig {
  std::size_t min_features = 1;
  std::size_t max_features = 8;
  std::size_t max_categories_per_column = 5;
  std::size_t min_classes = 2;
  std::size_t max_classes = 4;
  std::size_t min_samples = 32;
  std::size_t max_samples = 96;
  double noise = 0.05;              // label flip probability
  double missing_rate = 0.02;       // per categorical cell
  double categorical_fraction = 0.5;  // column kind draw in mlp / rule tasks
  double min_class_fraction = 0.05;
  double weight_linear = 0.6;
  double weight_mlp = 0.2;
  double weight_rule = 0.2;
  std::size_t max_retries = 64;

  void validate() const;
};

struct SyntheticTask {
  TaskFamily family = TaskFamily::linear;
  std::uint64_t seed = 0;
  std::size_t num_classes = 2;
  std::vector<std::size_t> category_counts;  // per categorical column
  EncodedRows rows;                          // categorical entries are table rows
  std::vector<int> labels;
  // Linear family only: score = w . x, class = number of thresholds below score.
  std::vector<double> linear_weights;
  std::vector<double> thresholds;
};

/// Draws one task. Deterministic in (cfg, seed); draws whose class balance
/// falls below cfg.min_class_fraction are redrawn from the next sub-seed.
SyntheticTask sample_task(const PriorConfig& cfg, std::uint64_t seed);

/// Same, with the family fixed.
SyntheticTask sample_task(const PriorConfig& cfg, std::uint64_t seed, TaskFamily family);

}  // namespace fttab
