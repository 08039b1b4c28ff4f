#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fttab/model.hpp"
#include "fttab/prior.hpp"

namespace fttab {

struct PretrainConfig {
  std::size_t episodes = 2000;
  std::size_t tasks_per_step = 1;
  double learning_rate = 1e-3;
  std::size_t warmup_steps = 50;
  double grad_clip = 1.0;
  double min_support_fraction = 0.5;
  double max_support_fraction = 0.8;
  // Chance that a task's categorical columns carry identifiers.
  double identifier_probability = 0.5;
  std::size_t heldout_tasks = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainRecord {
  std::size_t episode = 0;
  std::uint64_t task_seed = 0;
  double loss = 0.0;
};

struct PretrainLog {
  std::vector<PretrainRecord> records;
  double heldout_loss_start = 0.0;
  double heldout_loss_end = 0.0;
};

/// Builds an episode from explicit support/query row indices.
SupportQueryBatch make_episode(const EncodedRows& rows, std::span<const int> labels, std::span<const std::size_t> support,
                               std::span<const std::size_t> query, std::size_t num_classes);

/// One episode over a synthetic task: random support/query partition plus a
/// tokenizer with a fresh, frozen category table and identifiers. W_num is
/// shared with the backbone input embedding.
struct TaskEpisode {
  SupportQueryBatch batch;
  FeatureTokenizer tokenizer;
};
TaskEpisode make_task_episode(const PfnBackbone& model, const SyntheticTask& task, const PretrainConfig& cfg,
                              std::uint64_t seed);

/// Query cross-entropy training over synthetic tasks. Throws NumericError
/// naming the task seed on a non-finite loss. Called after every episode
/// when `progress` is set.
PretrainLog pretrain(PfnBackbone& model, const PriorConfig& prior, const PretrainConfig& cfg,
                     const std::function<void(const PretrainRecord&)>& progress = {});

/// Mean query cross-entropy over a fixed task set.
double heldout_loss(const PfnBackbone& model, const PriorConfig& prior, const PretrainConfig& cfg);

struct InContextScore {
  double accuracy = 0.0;  // mean per-task query accuracy
  double majority = 0.0;  // mean accuracy of predicting the support majority class
  std::size_t tasks = 0;
};

InContextScore evaluate_in_context(const PfnBackbone& model, const PriorConfig& prior, const PretrainConfig& cfg,
                                   std::size_t tasks, std::uint64_t seed, std::optional<TaskFamily> family);

}  // namespace fttab
