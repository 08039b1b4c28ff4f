#include "fttab/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fttab/errors.hpp"
#include "fttab/random.hpp"

namespace fttab {

std::string family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::linear: return "linear";
    case TaskFamily::mlp: return "mlp";
    case TaskFamily::rule: return "rule";
  }
  return "unknown";
}

void PriorConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (min_features < 1 || min_features > max_features) fail("prior.max_features", "need 1 <= min <= max");
  if (max_categories_per_column < 2) fail("prior.max_categories", "must be >= 2");
  if (min_classes < 2 || min_classes > max_classes) fail("prior.max_classes", "need 2 <= min <= max");
  if (min_samples < 4 || min_samples > max_samples) fail("prior.max_samples", "need 4 <= min <= max");
  if (!(noise >= 0.0 && noise < 0.5)) fail("prior.noise", "must be in [0, 0.5)");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) fail("prior.missing_rate", "must be in [0, 1)");
  if (!(categorical_fraction >= 0.0 && categorical_fraction <= 1.0)) fail("prior.categorical_fraction", "must be in [0, 1]");
  if (!(min_class_fraction >= 0.0) ||
      std::ceil(min_class_fraction * static_cast<double>(max_samples)) * static_cast<double>(max_classes) >
          static_cast<double>(min_samples)) {
    fail("prior.min_class_fraction", "too large for the sample and class ranges");
  }
  const double weights[] = {weight_linear, weight_mlp, weight_rule};
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) fail("prior.weight_*", "family weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) fail("prior.weight_*", "family weights must sum to 1");
  if (max_retries < 1) fail("prior.max_retries", "must be >= 1");
}

namespace {

// Class sizes: every class gets `floor_count`, the rest is split at uniform
// random cut points.
std::vector<std::size_t> class_sizes(std::size_t n, std::size_t classes, std::size_t floor_count, Rng& rng) {
  const std::size_t spare = n - classes * floor_count;
  std::vector<std::size_t> cuts{0, spare};
  for (std::size_t k = 1; k < classes; ++k) cuts.push_back(uniform_index(rng, 0, spare));
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> sizes;
  for (std::size_t k = 0; k < classes; ++k) sizes.push_back(floor_count + cuts[k + 1] - cuts[k]);
  return sizes;
}

// Assigns classes by ascending score; thresholds are midpoints between the
// last score of one class and the first of the next.
std::vector<int> bin_scores(const std::vector<double>& scores, const std::vector<std::size_t>& sizes,
                            std::vector<double>* thresholds) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<int> labels(scores.size());
  std::size_t pos = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    for (std::size_t i = 0; i < sizes[k]; ++i) labels[order[pos + i]] = static_cast<int>(k);
    pos += sizes[k];
    if (thresholds && k + 1 < sizes.size()) {
      thresholds->push_back(0.5 * (scores[order[pos - 1]] + scores[order[pos]]));
    }
  }
  return labels;
}

bool balanced(const std::vector<int>& labels, std::size_t classes, double min_fraction) {
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  const double need = std::max(1.0, min_fraction * static_cast<double>(labels.size()));
  return std::all_of(counts.begin(), counts.end(), [&](std::size_t c) { return static_cast<double>(c) >= need; });
}

TaskFamily draw_family(const PriorConfig& cfg, Rng& rng) {
  const double u = uniform01(rng);
  if (u < cfg.weight_linear) return TaskFamily::linear;
  if (u < cfg.weight_linear + cfg.weight_mlp) return TaskFamily::mlp;
  return TaskFamily::rule;
}

SyntheticTask draw_once(const PriorConfig& cfg, std::uint64_t seed, TaskFamily family) {
  Rng rng(seed);
  SyntheticTask t;
  t.family = family;
  t.seed = seed;
  const std::size_t n = uniform_index(rng, cfg.min_samples, cfg.max_samples);
  const std::size_t features = uniform_index(rng, cfg.min_features, cfg.max_features);
  t.num_classes = uniform_index(rng, cfg.min_classes, cfg.max_classes);

  // Column kinds: linear tasks are purely numerical; mlp tasks keep at least
  // one numerical column; rule tasks keep at least one categorical column.
  std::size_t numerical = features, categorical = 0;
  if (family != TaskFamily::linear) {
    categorical = 0;
    for (std::size_t f = 0; f < features; ++f) categorical += uniform01(rng) < cfg.categorical_fraction;
    if (family == TaskFamily::mlp && categorical == features) --categorical;
    if (family == TaskFamily::rule && categorical == 0) categorical = 1;
    numerical = features - categorical;
  }
  for (std::size_t j = 0; j < categorical; ++j) {
    t.category_counts.push_back(uniform_index(rng, 2, cfg.max_categories_per_column));
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n * numerical);
  for (auto& v : x) v = normal(rng);
  std::vector<std::size_t> c(n * categorical);  // position within the column vocabulary
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < categorical; ++j) c[r * categorical + j] = uniform_index(rng, 0, t.category_counts[j] - 1);

  const std::size_t floor_count =
      static_cast<std::size_t>(std::ceil((cfg.min_class_fraction + cfg.noise) * static_cast<double>(n)));
  const std::size_t feasible_floor = std::min(floor_count, n / t.num_classes);

  std::vector<int> labels;
  bool permute_classes = true;
  if (family == TaskFamily::linear) {
    t.linear_weights.resize(numerical);
    for (auto& w : t.linear_weights) w = normal(rng);
    std::vector<double> scores(n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < numerical; ++i) scores[r] += t.linear_weights[i] * x[r * numerical + i];
    labels = bin_scores(scores, class_sizes(n, t.num_classes, feasible_floor, rng), &t.thresholds);
    permute_classes = false;
  } else if (family == TaskFamily::mlp) {
    const std::size_t hidden = 8, inputs = numerical + categorical;
    std::vector<std::vector<double>> effects(categorical);
    for (std::size_t j = 0; j < categorical; ++j) {
      effects[j].resize(t.category_counts[j]);
      for (auto& e : effects[j]) e = normal(rng);
    }
    std::vector<double> w1(inputs * hidden), b1(hidden), w2(hidden);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(inputs));
    for (auto& w : w1) w = normal(rng) * s1 * 2.0;
    for (auto& b : b1) b = normal(rng) * 0.5;
    for (auto& w : w2) w = normal(rng);
    std::vector<double> scores(n, 0.0), in(inputs);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < numerical; ++i) in[i] = x[r * numerical + i];
      for (std::size_t j = 0; j < categorical; ++j) in[numerical + j] = effects[j][c[r * categorical + j]];
      for (std::size_t h = 0; h < hidden; ++h) {
        double a = b1[h];
        for (std::size_t i = 0; i < inputs; ++i) a += in[i] * w1[i * hidden + h];
        scores[r] += std::tanh(a) * w2[h];
      }
    }
    labels = bin_scores(scores, class_sizes(n, t.num_classes, feasible_floor, rng), nullptr);
  } else {
    // One or two key columns; each value combination maps to a class, with
    // every class used at least once when there are enough combinations.
    const std::size_t keys = std::min<std::size_t>(categorical, uniform_index(rng, 1, 2));
    std::vector<std::size_t> key_cols(categorical);
    std::iota(key_cols.begin(), key_cols.end(), 0);
    std::shuffle(key_cols.begin(), key_cols.end(), rng);
    key_cols.resize(keys);
    std::size_t combos = 1;
    for (std::size_t k : key_cols) combos *= t.category_counts[k];
    std::vector<int> map(combos);
    for (std::size_t i = 0; i < combos; ++i) {
      map[i] = static_cast<int>(i < t.num_classes ? i : uniform_index(rng, 0, t.num_classes - 1));
    }
    std::shuffle(map.begin(), map.end(), rng);
    labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t key = 0;
      for (std::size_t k : key_cols) key = key * t.category_counts[k] + c[r * categorical + k];
      labels[r] = map[key];
    }
  }

  if (permute_classes) {
    std::vector<int> perm(t.num_classes);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (auto& y : labels) y = perm[static_cast<std::size_t>(y)];
  }
  if (cfg.noise > 0.0) {
    for (auto& y : labels) {
      if (uniform01(rng) < cfg.noise) {
        const int shift = static_cast<int>(uniform_index(rng, 1, t.num_classes - 1));
        y = (y + shift) % static_cast<int>(t.num_classes);
      }
    }
  }

  t.rows.count = n;
  t.rows.numerical = numerical;
  t.rows.categorical = categorical;
  t.rows.num = std::move(x);
  std::vector<std::size_t> offsets;
  std::size_t next = 1;
  for (auto k : t.category_counts) {
    offsets.push_back(next);
    next += k;
  }
  t.rows.cat.resize(n * categorical);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < categorical; ++j) {
      const bool missing = cfg.missing_rate > 0.0 && uniform01(rng) < cfg.missing_rate;
      t.rows.cat[r * categorical + j] = missing ? CategoricalTokenTable::kNanRow : offsets[j] + c[r * categorical + j];
    }
  }
  t.labels = std::move(labels);
  return t;
}

}  // namespace

SyntheticTask sample_task(const PriorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0xfa3));
  return sample_task(cfg, seed, draw_family(cfg, rng));
}

SyntheticTask sample_task(const PriorConfig& cfg, std::uint64_t seed, TaskFamily family) {
  cfg.validate();
  for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    auto t = draw_once(cfg, derive_seed(seed, attempt), family);
    if (balanced(t.labels, t.num_classes, cfg.min_class_fraction)) {
      t.seed = seed;
      return t;
    }
  }
  throw NumericError("no balanced " + family_name(family) + " task after " + std::to_string(cfg.max_retries) +
                     " draws (seed " + std::to_string(seed) + ")");
}

}  // namespace fttab
