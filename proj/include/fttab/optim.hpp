#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fttab/tensor.hpp"

namespace fttab {

struct NamedParameter {
  std::string name;
  Tensor tensor;
  // Rows of a matrix parameter that never receive updates (e.g. the NaN token).
  std::vector<std::size_t> frozen_rows;
};

using ParameterList = std::vector<NamedParameter>;

void zero_grads(ParameterList& params);
// Zeroes gradient rows listed in frozen_rows.
void mask_frozen_rows(ParameterList& params);
std::size_t count_trainable(const ParameterList& params);
// Rescales trainable gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParameterList& params, double max_norm);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed parameter list. Frozen tensors (requires_grad == false)
// and frozen rows are skipped entirely, so their values never change.
class Adam {
 public:
  Adam(ParameterList params, AdamConfig config);

  void step();
  void zero_grad();
  std::size_t steps_taken() const { return step_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  double learning_rate() const { return config_.learning_rate; }
  const ParameterList& parameters() const { return params_; }

 private:
  ParameterList params_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::size_t step_ = 0;
};

}  // namespace fttab
