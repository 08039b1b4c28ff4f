#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fttab/data.hpp"
#include "fttab/model.hpp"

namespace fttab {

enum class Variant { full, no_identifiers, no_regularization };
enum class TrainableSet { ft_layer_only, full_model };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);
std::string trainable_set_name(TrainableSet t);
TrainableSet parse_trainable_set(const std::string& s);

struct FinetuneConfig {
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  double lambda_orth = 1.0;
  Variant variant = Variant::full;
  // ft_layer_only trains the category table, identifiers and the head.
  TrainableSet trainable = TrainableSet::ft_layer_only;
  double support_fraction = 0.7;
  std::size_t steps_per_epoch = 8;
  // Rows per training episode; larger training sets are subsampled.
  std::size_t max_episode_rows = 256;
  std::uint64_t seed = 0;

  // Regularization weight actually applied (0 unless variant is full).
  double effective_lambda() const;
  void validate() const;
};

/// A backbone bound to one dataset: its schema, fitted statistics, class
/// names and FT layer. W_num is a frozen copy of the first n rows of the
/// backbone input embedding.
struct FtModel {
  PfnBackbone backbone;
  FeatureTokenizer tokenizer;
  FittedSchema fitted;
  std::vector<std::string> classes;

  FtModel clone() const;
  // Tensors the optimizer may update under `trainable`.
  ParameterList trainable_parameters(TrainableSet trainable) const;
  // Every tensor, backbone first then FT layer.
  ParameterList all_parameters() const;
};

/// Fresh FT layer for a dataset. Identifiers are omitted for the
/// no_identifiers variant; the table is drawn before the identifiers so all
/// variants share the same table initialization for a seed.
FtModel bind_model(const PfnBackbone& backbone, const FittedSchema& fitted, std::vector<std::string> classes,
                   Variant variant, std::uint64_t seed);

/// Query cross-entropy plus effective_lambda * orthogonal_loss(I).
Tensor total_loss(const SupportQueryBatch& batch, const FtModel& model, const FinetuneConfig& cfg);

/// Probabilities for `query` rows using `support` rows as context; queries
/// are processed in chunks (results do not depend on chunking).
std::vector<double> predict_rows(const FtModel& model, const EncodedDataset& support, const EncodedRows& query,
                                 std::size_t chunk = 256);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double train_auc = 0.0;  // NaN when undefined
  std::optional<double> test_accuracy;
  std::optional<double> test_auc;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

struct FinetuneResult {
  FtModel model;          // best-on-train checkpoint
  TrainLog log;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
};

struct TrainMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;
};

/// Two-fold cross prediction inside the training set: each half is scored
/// with the other half as support.
TrainMetrics train_metrics(const FtModel& model, const EncodedDataset& train, std::uint64_t seed);

/// Fine-tunes on `train`. `test`, when given, is scored after every epoch for
/// the log only; checkpoint selection reads train metrics alone.
FinetuneResult finetune(const FtModel& model, const EncodedDataset& train, const FinetuneConfig& cfg,
                        const EncodedDataset* test = nullptr,
                        const std::function<void(const EpochRecord&)>& progress = {});

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::size_t best_epoch = 0;
  double test_auc = 0.0;
  double test_accuracy = 0.0;
  TrainLog log;
  FtModel model;
};

struct RepetitionReport {
  std::string dataset;
  Variant variant = Variant::full;
  std::vector<SeedResult> seeds;
  double mean_auc = 0.0;
  double mean_accuracy = 0.0;
};

std::vector<std::uint64_t> default_protocol_seeds();

/// Split, fit on train, fine-tune, score the best-on-train checkpoint on
/// test; once per seed, merged in seed order.
RepetitionReport run_protocol(const RawDataset& data, const std::string& dataset_name, const PfnBackbone& backbone,
                              const FinetuneConfig& cfg, const std::vector<std::uint64_t>& seeds = default_protocol_seeds(),
                              const std::function<void(std::uint64_t, const EpochRecord&)>& progress = {});

/// Mean rank per report (1 = best test AUC per seed, ties share the mean
/// rank). Reports must share their seed list.
std::vector<double> mean_ranks(const std::vector<RepetitionReport>& reports);

}  // namespace fttab
