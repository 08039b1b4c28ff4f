#pragma once

#include <functional>
#include <string>

#include "fttab/optim.hpp"
#include "fttab/tensor.hpp"

namespace fttab {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Test hook: negate analytic gradients before comparing (negative control).
  bool flip_analytic_sign = false;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences for every entry of every trainable parameter.
///
/// The error of one entry is |analytic - numeric| / max(1, |analytic|, |numeric|);
/// the maximum over all entries is returned. Frozen parameters and frozen rows
/// are skipped. Throws NumericError if f is non-finite at any probe point and
/// PreconditionError if eps is outside (0, 1e-3].
GradCheckResult grad_check(const std::function<Tensor()>& f, ParameterList params,
                           const GradCheckOptions& options = {});

}  // namespace fttab
