#pragma once

#include <cstddef>
#include <span>

namespace fttab {

/// Multi-class ROC AUC, one-vs-one macro average.
///
/// For every unordered class pair (i, j) with both classes present, the AUC
/// of column i separating label i from label j and the AUC of column j
/// separating j from i are averaged; the result is the mean over pairs. Tied
/// scores count 1/2. probs is row-major [labels.size(), classes].
///
/// Throws PreconditionError for fewer than two samples and
/// UndefinedMetricError when no class pair has both classes present.
double roc_auc_ovo(std::span<const double> probs, std::size_t classes, std::span<const int> labels);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(std::span<const double> probs, std::size_t classes, std::span<const int> labels);

}  // namespace fttab
