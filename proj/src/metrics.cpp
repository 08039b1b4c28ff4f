#include "fttab/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fttab/errors.hpp"

namespace fttab {

namespace {

void check_inputs(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  if (classes == 0 || probs.size() != labels.size() * classes) {
    throw DimensionError("probability matrix does not match " + std::to_string(labels.size()) + " labels x " +
                         std::to_string(classes) + " classes");
  }
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw IndexError("label " + std::to_string(y) + " out of range");
}

// Twice the Mann-Whitney count: 2 * #(pos > neg) + #(pos == neg).
std::uint64_t doubled_concordance(std::vector<std::pair<double, bool>>& scored) {
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::uint64_t total = 0, negatives_below = 0;
  for (std::size_t g = 0; g < scored.size();) {
    std::size_t end = g;
    std::uint64_t pos = 0, neg = 0;
    while (end < scored.size() && scored[end].first == scored[g].first) {
      (scored[end].second ? pos : neg) += 1;
      ++end;
    }
    total += 2 * pos * negatives_below + pos * neg;
    negatives_below += neg;
    g = end;
  }
  return total;
}

}  // namespace

double roc_auc_ovo(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  check_inputs(probs, classes, labels);
  if (labels.size() < 2) throw PreconditionError("roc_auc_ovo needs at least two samples");
  std::vector<std::uint64_t> counts(classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];

  double total = 0.0;
  std::size_t pairs = 0;
  std::vector<std::pair<double, bool>> scored;
  for (std::size_t a = 0; a < classes; ++a) {
    for (std::size_t b = a + 1; b < classes; ++b) {
      if (counts[a] == 0 || counts[b] == 0) continue;
      const double denom = 2.0 * static_cast<double>(counts[a] * counts[b]);
      double directed[2];
      for (int side = 0; side < 2; ++side) {
        const std::size_t pos = side == 0 ? a : b, neg = side == 0 ? b : a;
        scored.clear();
        for (std::size_t r = 0; r < labels.size(); ++r) {
          const auto y = static_cast<std::size_t>(labels[r]);
          if (y == pos || y == neg) scored.emplace_back(probs[r * classes + pos], y == pos);
        }
        directed[side] = static_cast<double>(doubled_concordance(scored)) / denom;
      }
      total += (directed[0] + directed[1]) / 2.0;
      ++pairs;
    }
  }
  if (pairs == 0) throw UndefinedMetricError("roc_auc_ovo undefined: fewer than two classes present");
  return total / static_cast<double>(pairs);
}

double accuracy(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  check_inputs(probs, classes, labels);
  if (labels.empty()) throw PreconditionError("accuracy of zero samples");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* row = probs.data() + r * classes;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    if (best == static_cast<std::size_t>(labels[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace fttab
