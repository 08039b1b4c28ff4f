#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fttab/grad_check.hpp"
#include "fttab/model.hpp"

namespace fttab {

// Small random model and episode for checking every differentiable block.
struct GradSuiteConfig {
  ModelConfig model{8, 2, 2, 16, 3, 4};
  std::size_t support = 3;
  std::size_t query = 2;
  std::size_t numerical = 2;
  std::vector<std::size_t> category_counts{3, 2};
  double lambda_orth = 1.0;
  std::uint64_t seed = 0;
  GradCheckOptions options;
};

struct ComponentCheck {
  std::string component;  // ft_layer, encoder, label_embedder, total_loss
  GradCheckResult result;
};

std::vector<ComponentCheck> run_grad_suite(const GradSuiteConfig& cfg);

}  // namespace fttab
