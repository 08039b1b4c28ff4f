#include "fttab/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fttab/errors.hpp"
#include "fttab/metrics.hpp"
#include "fttab/ops.hpp"
#include "fttab/optim.hpp"
#include "fttab/pretrain.hpp"
#include "fttab/random.hpp"

namespace fttab {

namespace {

constexpr std::uint64_t kEpisodeStream = 12;
constexpr std::uint64_t kFoldStream = 13;

std::vector<double> logits_rows(const FtModel& model, const EncodedDataset& support, const EncodedRows& query,
                                std::size_t chunk) {
  NoGradGuard guard;
  const std::size_t C = model.classes.size();
  std::vector<double> out;
  out.reserve(query.count * C);
  std::vector<std::size_t> all(support.rows.count);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t begin = 0; begin < query.count; begin += chunk) {
    const std::size_t end = std::min(query.count, begin + chunk);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    SupportQueryBatch b;
    b.support_x = support.rows;
    b.support_y = support.labels;
    b.query_x = query.select(idx);
    b.num_classes = C;
    const auto logits = predict_logits(b, model.backbone, model.tokenizer);
    const auto data = logits.data();
    out.insert(out.end(), data.begin(), data.end());
  }
  return out;
}

double safe_auc(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  try {
    return roc_auc_ovo(probs, classes, labels);
  } catch (const UndefinedMetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

bool better_checkpoint(const TrainMetrics& cand, double best_auc, double best_loss) {
  if (std::isnan(cand.auc)) return std::isnan(best_auc) && cand.loss < best_loss;
  if (std::isnan(best_auc)) return true;
  return cand.auc > best_auc || (cand.auc == best_auc && cand.loss < best_loss);
}

void set_all_requires_grad(const ParameterList& params, bool on) {
  for (auto p : params) p.tensor.set_requires_grad(on);
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_identifiers: return "no_identifiers";
    case Variant::no_regularization: return "no_regularization";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_identifiers" || s == "n.i.") return Variant::no_identifiers;
  if (s == "no_regularization" || s == "n.r.") return Variant::no_regularization;
  throw ConfigError("variant: expected full, no_identifiers or no_regularization, got '" + s + "'");
}

std::string trainable_set_name(TrainableSet t) {
  return t == TrainableSet::ft_layer_only ? "ft_layer_only" : "full_model";
}

TrainableSet parse_trainable_set(const std::string& s) {
  if (s == "ft_layer_only") return TrainableSet::ft_layer_only;
  if (s == "full_model") return TrainableSet::full_model;
  throw ConfigError("trainable: expected ft_layer_only or full_model, got '" + s + "'");
}

double FinetuneConfig::effective_lambda() const { return variant == Variant::full ? lambda_orth : 0.0; }

void FinetuneConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("finetune.learning_rate: must be > 0");
  if (!(lambda_orth >= 0.0)) throw ConfigError("finetune.lambda_orth: must be >= 0");
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) throw ConfigError("finetune.support_fraction: must be in (0, 1)");
  if (steps_per_epoch < 1) throw ConfigError("finetune.steps_per_epoch: must be >= 1");
  if (max_episode_rows < 2) throw ConfigError("finetune.max_episode_rows: must be >= 2");
}

FtModel FtModel::clone() const {
  FtModel m;
  m.backbone = backbone.clone();
  auto copy = [](const Tensor& t) { return t.clone(t.requires_grad()); };
  const auto& table = tokenizer.table();
  CategoricalTokenTable t(copy(table.weights()), table.offsets(), table.sizes());
  std::optional<FeatureIdentifiers> ids;
  if (tokenizer.identifiers()) ids = FeatureIdentifiers{copy(tokenizer.identifiers()->weights)};
  m.tokenizer = FeatureTokenizer(copy(tokenizer.numerical_weights()), std::move(t), std::move(ids));
  m.fitted = fitted;
  m.classes = classes;
  return m;
}

ParameterList FtModel::trainable_parameters(TrainableSet trainable) const {
  ParameterList out;
  const auto ft = tokenizer.parameters();
  for (const auto& p : ft)
    if (p.name != "ft.numerical_weights") out.push_back(p);
  if (trainable == TrainableSet::full_model) {
    for (const auto& p : backbone.parameters())
      if (p.name != "backbone.input_embedding") out.push_back(p);
  } else {
    for (const auto& p : backbone.head_parameters()) out.push_back(p);
  }
  return out;
}

ParameterList FtModel::all_parameters() const {
  auto out = backbone.parameters();
  for (const auto& p : tokenizer.parameters()) out.push_back(p);
  return out;
}

FtModel bind_model(const PfnBackbone& backbone, const FittedSchema& fitted, std::vector<std::string> classes,
                   Variant variant, std::uint64_t seed) {
  if (classes.size() < 2) throw SchemaError("need at least two classes");
  if (classes.size() > backbone.config.max_classes) {
    throw SchemaError(std::to_string(classes.size()) + " classes exceed model.max_classes=" +
                      std::to_string(backbone.config.max_classes));
  }
  Rng rng(seed);
  const std::size_t d = backbone.config.d;
  auto table = CategoricalTokenTable::initialize(fitted.schema, d, rng, true);
  std::optional<FeatureIdentifiers> ids;
  const std::size_t m = fitted.schema.categorical_count();
  if (m > 0) {
    auto drawn = FeatureIdentifiers::initialize(m, d, rng, true);
    if (variant != Variant::no_identifiers) ids = std::move(drawn);
  }
  FtModel model;
  model.backbone = backbone.clone();
  const std::size_t n = fitted.schema.numerical_count();
  if (n > backbone.config.max_features) {
    throw SchemaError(std::to_string(n) + " numerical columns exceed model.max_features=" +
                      std::to_string(backbone.config.max_features));
  }
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  Tensor w_num;
  {
    NoGradGuard guard;
    w_num = select_rows(backbone.input_embedding, rows).clone(false);
  }
  model.tokenizer = FeatureTokenizer(std::move(w_num), std::move(table), std::move(ids));
  model.fitted = fitted;
  model.classes = std::move(classes);
  return model;
}

Tensor total_loss(const SupportQueryBatch& batch, const FtModel& model, const FinetuneConfig& cfg) {
  Tensor loss = softmax_cross_entropy(predict_logits(batch, model.backbone, model.tokenizer), batch.query_y);
  const double lambda = cfg.effective_lambda();
  if (lambda > 0.0 && model.tokenizer.identifiers()) {
    loss = add(loss, scale(orthogonal_loss(model.tokenizer.identifiers()->weights), lambda));
  }
  return loss;
}

std::vector<double> predict_rows(const FtModel& model, const EncodedDataset& support, const EncodedRows& query,
                                 std::size_t chunk) {
  if (chunk == 0) throw PreconditionError("chunk size must be positive");
  return softmax_rows(logits_rows(model, support, query, chunk), model.classes.size());
}

TrainMetrics train_metrics(const FtModel& model, const EncodedDataset& train, std::uint64_t seed) {
  const std::size_t n = train.rows.count;
  if (n < 2) throw PreconditionError("train metrics need at least two rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, kFoldStream));
  std::shuffle(order.begin(), order.end(), rng);
  const std::span<const std::size_t> all(order);
  const auto fold_a = all.first(n / 2), fold_b = all.subspan(n / 2);

  const std::size_t C = model.classes.size();
  std::vector<double> logits(n * C);
  for (int side = 0; side < 2; ++side) {
    const auto support = side == 0 ? fold_b : fold_a;
    const auto query = side == 0 ? fold_a : fold_b;
    const auto out = logits_rows(model, train.select(support), train.rows.select(query), 256);
    for (std::size_t i = 0; i < query.size(); ++i)
      std::copy_n(out.begin() + static_cast<std::ptrdiff_t>(i * C), C, logits.begin() + static_cast<std::ptrdiff_t>(query[i] * C));
  }
  TrainMetrics m;
  {
    NoGradGuard guard;
    m.loss = softmax_cross_entropy(Tensor({n, C}, logits), train.labels).item();
  }
  const auto probs = softmax_rows(logits, C);
  m.accuracy = accuracy(probs, C, train.labels);
  m.auc = safe_auc(probs, C, train.labels);
  return m;
}

FinetuneResult finetune(const FtModel& model, const EncodedDataset& train, const FinetuneConfig& cfg,
                        const EncodedDataset* test, const std::function<void(const EpochRecord&)>& progress) {
  cfg.validate();
  if (train.rows.count < 2) throw PreconditionError("fine-tuning needs at least two training rows");
  if (train.num_classes != model.classes.size()) throw SchemaError("training labels do not match the model classes");

  FinetuneResult result{model.clone(), {}, 0};
  if (cfg.epochs == 0) return result;

  FtModel work = model.clone();
  set_all_requires_grad(work.all_parameters(), false);
  auto params = work.trainable_parameters(cfg.trainable);
  set_all_requires_grad(params, true);
  Adam adam(params, AdamConfig{cfg.learning_rate});
  Rng episode_rng(derive_seed(cfg.seed, kEpisodeStream));

  double best_auc = std::numeric_limits<double>::quiet_NaN();
  double best_loss = std::numeric_limits<double>::infinity();
  const std::size_t n = train.rows.count;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      std::shuffle(order.begin(), order.end(), episode_rng);
      const std::size_t rows = std::min(n, cfg.max_episode_rows);
      const auto s = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::lround(cfg.support_fraction * static_cast<double>(rows))), 1, rows - 1);
      const std::span<const std::size_t> picked(order.data(), rows);
      const auto batch = make_episode(train.rows, train.labels, picked.first(s), picked.subspan(s), train.num_classes);
      adam.zero_grad();
      Tensor loss = total_loss(batch, work, cfg);
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite fine-tuning loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step) + " (seed " + std::to_string(cfg.seed) + ")");
      }
      loss.backward();
      adam.step();
    }
    adam.zero_grad();

    const auto tm = train_metrics(work, train, cfg.seed);
    EpochRecord rec{epoch, tm.loss, tm.accuracy, tm.auc, std::nullopt, std::nullopt};
    if (test && test->rows.count > 0) {
      const auto probs = predict_rows(work, train, test->rows);
      rec.test_accuracy = accuracy(probs, work.classes.size(), test->labels);
      const double auc = safe_auc(probs, work.classes.size(), test->labels);
      if (!std::isnan(auc)) rec.test_auc = auc;
    }
    result.log.epochs.push_back(rec);
    if (progress) progress(rec);
    if (better_checkpoint(tm, best_auc, best_loss)) {
      best_auc = tm.auc;
      best_loss = tm.loss;
      result.model = work.clone();
      result.best_epoch = epoch;
    }
  }
  return result;
}

std::vector<std::uint64_t> default_protocol_seeds() { return {0, 1, 2, 3, 4}; }

RepetitionReport run_protocol(const RawDataset& data, const std::string& dataset_name, const PfnBackbone& backbone,
                              const FinetuneConfig& cfg, const std::vector<std::uint64_t>& seeds,
                              const std::function<void(std::uint64_t, const EpochRecord&)>& progress) {
  cfg.validate();
  if (seeds.empty()) throw ConfigError("protocol needs at least one seed");
  RepetitionReport report;
  report.dataset = dataset_name;
  report.variant = cfg.variant;
  const auto classes = class_vocabulary(data);
  for (const auto seed : seeds) {
    auto [train_raw, test_raw] = split_train_test(data, seed);
    const auto fitted = fit_schema(train_raw);
    const auto train = encode(train_raw, fitted, classes);
    const auto test = encode(test_raw, fitted, classes);
    FinetuneConfig run = cfg;
    run.seed = derive_seed(cfg.seed, seed);
    const auto initial = bind_model(backbone, fitted, classes, cfg.variant, run.seed);
    auto ft = finetune(initial, train, run, &test,
                       [&](const EpochRecord& r) {
                         if (progress) progress(seed, r);
                       });
    const auto probs = predict_rows(ft.model, train, test.rows);
    SeedResult sr;
    sr.seed = seed;
    sr.train_rows = train.rows.count;
    sr.test_rows = test.rows.count;
    sr.best_epoch = ft.best_epoch;
    sr.test_auc = roc_auc_ovo(probs, classes.size(), test.labels);
    sr.test_accuracy = accuracy(probs, classes.size(), test.labels);
    sr.log = std::move(ft.log);
    sr.model = std::move(ft.model);
    report.seeds.push_back(std::move(sr));
  }
  for (const auto& s : report.seeds) {
    report.mean_auc += s.test_auc;
    report.mean_accuracy += s.test_accuracy;
  }
  report.mean_auc /= static_cast<double>(report.seeds.size());
  report.mean_accuracy /= static_cast<double>(report.seeds.size());
  return report;
}

std::vector<double> mean_ranks(const std::vector<RepetitionReport>& reports) {
  if (reports.empty()) return {};
  const std::size_t seeds = reports.front().seeds.size();
  for (const auto& r : reports) {
    if (r.seeds.size() != seeds) throw PreconditionError("reports cover different seed lists");
    for (std::size_t i = 0; i < seeds; ++i)
      if (r.seeds[i].seed != reports.front().seeds[i].seed) throw PreconditionError("reports cover different seed lists");
  }
  std::vector<double> ranks(reports.size(), 0.0);
  for (std::size_t i = 0; i < seeds; ++i) {
    for (std::size_t a = 0; a < reports.size(); ++a) {
      const double v = reports[a].seeds[i].test_auc;
      double better = 0.0, equal = 0.0;
      for (const auto& r : reports) {
        better += r.seeds[i].test_auc > v;
        equal += r.seeds[i].test_auc == v;
      }
      ranks[a] += better + (equal + 1.0) / 2.0;
    }
  }
  for (auto& r : ranks) r /= static_cast<double>(seeds);
  return ranks;
}

}  // namespace fttab
