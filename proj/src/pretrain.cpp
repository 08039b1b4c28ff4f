#include "fttab/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fttab/errors.hpp"
#include "fttab/metrics.hpp"
#include "fttab/random.hpp"

namespace fttab {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kHeldoutStream = 2;

double scheduled_rate(const PretrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (step < cfg.warmup_steps) return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  const double span = static_cast<double>(std::max<std::size_t>(1, total_steps - cfg.warmup_steps));
  const double t = static_cast<double>(step - cfg.warmup_steps) / span;
  // Cosine decay to a tenth of the peak rate.
  return cfg.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * std::min(t, 1.0))));
}

void check_compatible(const PfnBackbone& model, const PriorConfig& prior) {
  if (prior.max_features > model.config.max_features) {
    throw ConfigError("prior.max_features exceeds model.max_features");
  }
  if (prior.max_classes > model.config.max_classes) throw ConfigError("prior.max_classes exceeds model.max_classes");
}

}  // namespace

void PretrainConfig::validate() const {
  if (tasks_per_step < 1) throw ConfigError("pretrain.tasks_per_step: must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("pretrain.learning_rate: must be > 0");
  if (!(grad_clip > 0.0)) throw ConfigError("pretrain.grad_clip: must be > 0");
  if (!(min_support_fraction > 0.0 && min_support_fraction <= max_support_fraction && max_support_fraction < 1.0)) {
    throw ConfigError("pretrain.support_fraction: need 0 < min <= max < 1");
  }
  if (!(identifier_probability >= 0.0 && identifier_probability <= 1.0)) {
    throw ConfigError("pretrain.identifier_probability: must be in [0, 1]");
  }
}

SupportQueryBatch make_episode(const EncodedRows& rows, std::span<const int> labels, std::span<const std::size_t> support,
                               std::span<const std::size_t> query, std::size_t num_classes) {
  SupportQueryBatch b;
  b.support_x = rows.select(support);
  b.query_x = rows.select(query);
  for (auto i : support) b.support_y.push_back(labels[i]);
  for (auto i : query) b.query_y.push_back(labels[i]);
  b.num_classes = num_classes;
  return b;
}

TaskEpisode make_task_episode(const PfnBackbone& model, const SyntheticTask& task, const PretrainConfig& cfg,
                              std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = task.rows.count;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const double frac = cfg.min_support_fraction + (cfg.max_support_fraction - cfg.min_support_fraction) * uniform01(rng);
  const auto s = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(frac * static_cast<double>(n))), 1, n - 1);
  std::span<const std::size_t> all(order);

  const std::size_t d = model.config.d;
  auto table = CategoricalTokenTable::initialize(task.category_counts, d, rng, false);
  std::optional<FeatureIdentifiers> ids;
  if (!task.category_counts.empty() && uniform01(rng) < cfg.identifier_probability) {
    ids = FeatureIdentifiers::initialize(task.category_counts.size(), d, rng, false);
  }
  return TaskEpisode{make_episode(task.rows, task.labels, all.first(s), all.subspan(s), task.num_classes),
                     shared_tokenizer(model, task.rows.numerical, std::move(table), std::move(ids))};
}

PretrainLog pretrain(PfnBackbone& model, const PriorConfig& prior, const PretrainConfig& cfg,
                     const std::function<void(const PretrainRecord&)>& progress) {
  prior.validate();
  cfg.validate();
  check_compatible(model, prior);
  PretrainLog log;
  log.heldout_loss_start = heldout_loss(model, prior, cfg);
  if (cfg.episodes == 0) {
    log.heldout_loss_end = log.heldout_loss_start;
    return log;
  }

  model.set_trainable(true);
  auto params = model.parameters();
  Adam adam(params, AdamConfig{cfg.learning_rate});
  const std::uint64_t train_base = derive_seed(cfg.seed, kTrainStream);
  const std::size_t total_steps = (cfg.episodes + cfg.tasks_per_step - 1) / cfg.tasks_per_step;

  for (std::size_t step = 0, episode = 0; episode < cfg.episodes; ++step) {
    adam.zero_grad();
    const std::size_t in_step = std::min(cfg.tasks_per_step, cfg.episodes - episode);
    for (std::size_t k = 0; k < in_step; ++k, ++episode) {
      const std::uint64_t task_seed = derive_seed(train_base, episode);
      const auto task = sample_task(prior, task_seed);
      const auto ep = make_task_episode(model, task, cfg, derive_seed(task_seed, 7));
      Tensor loss = softmax_cross_entropy(predict_logits(ep.batch, model, ep.tokenizer), ep.batch.query_y);
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite pretraining loss at episode " + std::to_string(episode) + " (task seed " +
                           std::to_string(task_seed) + ")");
      }
      scale(loss, 1.0 / static_cast<double>(in_step)).backward();
      PretrainRecord rec{episode, task_seed, loss.item()};
      log.records.push_back(rec);
      if (progress) progress(rec);
    }
    clip_grad_norm(params, cfg.grad_clip);
    adam.set_learning_rate(scheduled_rate(cfg, step, total_steps));
    adam.step();
  }
  adam.zero_grad();
  log.heldout_loss_end = heldout_loss(model, prior, cfg);
  return log;
}

double heldout_loss(const PfnBackbone& model, const PriorConfig& prior, const PretrainConfig& cfg) {
  if (cfg.heldout_tasks == 0) return 0.0;
  NoGradGuard guard;
  const std::uint64_t base = derive_seed(cfg.seed, kHeldoutStream);
  double total = 0.0;
  for (std::size_t i = 0; i < cfg.heldout_tasks; ++i) {
    const std::uint64_t task_seed = derive_seed(base, i);
    const auto task = sample_task(prior, task_seed);
    const auto ep = make_task_episode(model, task, cfg, derive_seed(task_seed, 7));
    total += softmax_cross_entropy(predict_logits(ep.batch, model, ep.tokenizer), ep.batch.query_y).item();
  }
  return total / static_cast<double>(cfg.heldout_tasks);
}

InContextScore evaluate_in_context(const PfnBackbone& model, const PriorConfig& prior, const PretrainConfig& cfg,
                                   std::size_t tasks, std::uint64_t seed, std::optional<TaskFamily> family) {
  check_compatible(model, prior);
  InContextScore score;
  for (std::size_t i = 0; i < tasks; ++i) {
    const std::uint64_t task_seed = derive_seed(seed, i);
    const auto task = family ? sample_task(prior, task_seed, *family) : sample_task(prior, task_seed);
    const auto ep = make_task_episode(model, task, cfg, derive_seed(task_seed, 7));
    const auto probs = predict_proba(ep.batch, model, ep.tokenizer);
    score.accuracy += accuracy(probs, ep.batch.num_classes, ep.batch.query_y);

    std::vector<std::size_t> counts(ep.batch.num_classes, 0);
    for (int y : ep.batch.support_y) ++counts[static_cast<std::size_t>(y)];
    const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const auto hits = std::count(ep.batch.query_y.begin(), ep.batch.query_y.end(), majority);
    score.majority += static_cast<double>(hits) / static_cast<double>(ep.batch.query_y.size());
  }
  score.tasks = tasks;
  if (tasks) {
    score.accuracy /= static_cast<double>(tasks);
    score.majority /= static_cast<double>(tasks);
  }
  return score;
}

}  // namespace fttab
