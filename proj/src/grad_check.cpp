#include "fttab/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "fttab/errors.hpp"

namespace fttab {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  const double v = f().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f, ParameterList params, const GradCheckOptions& options) {
  if (!(options.eps > 0.0 && options.eps <= 1e-3)) throw PreconditionError("grad_check eps must lie in (0, 1e-3]");

  zero_grads(params);
  Tensor loss = f();
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: objective is not finite");
  loss.backward();
  mask_frozen_rows(params);

  GradCheckResult result;
  for (auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    const auto analytic = p.tensor.grad();
    auto values = p.tensor.data();
    const std::size_t width = p.tensor.rank() == 2 ? p.tensor.cols() : p.tensor.numel();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (std::find(p.frozen_rows.begin(), p.frozen_rows.end(), i / width) != p.frozen_rows.end()) continue;
      const double original = values[i];
      values[i] = original + options.eps;
      const double up = evaluate(f);
      values[i] = original - options.eps;
      const double down = evaluate(f);
      values[i] = original;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = options.flip_analytic_sign ? -analytic[i] : analytic[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (++result.entries_checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p.name;
        result.worst_index = i;
      }
    }
  }
  zero_grads(params);
  return result;
}

}  // namespace fttab
