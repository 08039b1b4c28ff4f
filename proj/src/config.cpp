#include "fttab/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fttab/errors.hpp"

namespace fttab {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
  static const std::vector<ConfigKey> k = {
      {"seed", "0", "global seed for every random stream"},
      {"output_dir", "out", "directory for checkpoints, logs and reports"},
      {"checkpoint", "", "input checkpoint"},
      {"dataset", "", "dataset descriptor file"},
      {"model.d", "64", "embedding width"},
      {"model.layers", "3", "encoder depth"},
      {"model.heads", "4", "attention heads"},
      {"model.ff_dim", "128", "feedforward width"},
      {"model.max_classes", "10", "classifier outputs"},
      {"model.max_features", "32", "rows of the numerical input embedding"},
      {"prior.min_features", "1", ""},
      {"prior.max_features", "8", ""},
      {"prior.max_categories", "5", "categories per synthetic categorical column"},
      {"prior.min_classes", "2", ""},
      {"prior.max_classes", "4", ""},
      {"prior.min_samples", "32", "rows per synthetic task"},
      {"prior.max_samples", "96", ""},
      {"prior.noise", "0.05", "label flip probability"},
      {"prior.missing_rate", "0.02", "missing categorical cells"},
      {"prior.categorical_fraction", "0.5", ""},
      {"prior.min_class_fraction", "0.05", ""},
      {"prior.weight_linear", "0.6", "task family weights, must sum to 1"},
      {"prior.weight_mlp", "0.2", ""},
      {"prior.weight_rule", "0.2", ""},
      {"prior.max_retries", "64", ""},
      {"pretrain.episodes", "2000", ""},
      {"pretrain.tasks_per_step", "1", ""},
      {"pretrain.learning_rate", "0.001", ""},
      {"pretrain.warmup_steps", "50", ""},
      {"pretrain.grad_clip", "1.0", ""},
      {"pretrain.min_support_fraction", "0.5", ""},
      {"pretrain.max_support_fraction", "0.8", ""},
      {"pretrain.identifier_probability", "0.5", ""},
      {"pretrain.heldout_tasks", "32", ""},
      {"finetune.epochs", "30", ""},
      {"finetune.learning_rate", "0.001", ""},
      {"finetune.lambda_orth", "1.0", ""},
      {"finetune.variant", "full", "full | no_identifiers | no_regularization"},
      {"finetune.trainable", "ft_layer_only", "ft_layer_only | full_model"},
      {"finetune.support_fraction", "0.7", ""},
      {"finetune.steps_per_epoch", "8", ""},
      {"finetune.max_episode_rows", "256", ""},
      {"finetune.seeds", "0,1,2,3,4", "protocol repetition seeds"},
      {"gradcheck.eps", "1e-05", "central-difference step"},
      {"gradcheck.tolerance", "0.0001", "maximum relative error"},
      {"gradcheck.flip_sign", "false", "negate analytic gradients (negative control)"},
      {"gradcheck.d", "8", "model width used by the gradient check"},
      {"gradcheck.layers", "2", ""},
      {"gradcheck.heads", "2", ""},
      {"gradcheck.ff_dim", "16", ""},
      {"evaluate.tasks", "100", "fresh synthetic tasks scored by evaluate on a backbone"},
      {"evaluate.family", "linear", "linear | mlp | rule | mixed"},
      {"evaluate.seed", "1000003", "base seed of the evaluation tasks"},
  };
  return k;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    try {
      set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const auto& v = get(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::uint64_t> RunConfig::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError(key + ": expected a comma-separated integer list, got '" + get(key) + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key + ": list is empty");
  return out;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

ModelConfig RunConfig::model() const {
  ModelConfig c;
  c.d = get_u64("model.d");
  c.layers = get_u64("model.layers");
  c.heads = get_u64("model.heads");
  c.ff_dim = get_u64("model.ff_dim");
  c.max_classes = get_u64("model.max_classes");
  c.max_features = get_u64("model.max_features");
  c.validate();
  return c;
}

PriorConfig RunConfig::prior() const {
  PriorConfig c;
  c.min_features = get_u64("prior.min_features");
  c.max_features = get_u64("prior.max_features");
  c.max_categories_per_column = get_u64("prior.max_categories");
  c.min_classes = get_u64("prior.min_classes");
  c.max_classes = get_u64("prior.max_classes");
  c.min_samples = get_u64("prior.min_samples");
  c.max_samples = get_u64("prior.max_samples");
  c.noise = get_double("prior.noise");
  c.missing_rate = get_double("prior.missing_rate");
  c.categorical_fraction = get_double("prior.categorical_fraction");
  c.min_class_fraction = get_double("prior.min_class_fraction");
  c.weight_linear = get_double("prior.weight_linear");
  c.weight_mlp = get_double("prior.weight_mlp");
  c.weight_rule = get_double("prior.weight_rule");
  c.max_retries = get_u64("prior.max_retries");
  c.validate();
  return c;
}

PretrainConfig RunConfig::pretrain() const {
  PretrainConfig c;
  c.episodes = get_u64("pretrain.episodes");
  c.tasks_per_step = get_u64("pretrain.tasks_per_step");
  c.learning_rate = get_double("pretrain.learning_rate");
  c.warmup_steps = get_u64("pretrain.warmup_steps");
  c.grad_clip = get_double("pretrain.grad_clip");
  c.min_support_fraction = get_double("pretrain.min_support_fraction");
  c.max_support_fraction = get_double("pretrain.max_support_fraction");
  c.identifier_probability = get_double("pretrain.identifier_probability");
  c.heldout_tasks = get_u64("pretrain.heldout_tasks");
  c.seed = seed();
  c.validate();
  return c;
}

FinetuneConfig RunConfig::finetune() const {
  FinetuneConfig c;
  c.epochs = get_u64("finetune.epochs");
  c.learning_rate = get_double("finetune.learning_rate");
  c.lambda_orth = get_double("finetune.lambda_orth");
  c.variant = parse_variant(get("finetune.variant"));
  c.trainable = parse_trainable_set(get("finetune.trainable"));
  c.support_fraction = get_double("finetune.support_fraction");
  c.steps_per_epoch = get_u64("finetune.steps_per_epoch");
  c.max_episode_rows = get_u64("finetune.max_episode_rows");
  c.seed = seed();
  c.validate();
  return c;
}

GradSuiteConfig RunConfig::grad_suite() const {
  GradSuiteConfig c;
  c.model.d = get_u64("gradcheck.d");
  c.model.layers = get_u64("gradcheck.layers");
  c.model.heads = get_u64("gradcheck.heads");
  c.model.ff_dim = get_u64("gradcheck.ff_dim");
  c.model.validate();
  c.options.eps = get_double("gradcheck.eps");
  c.options.flip_analytic_sign = get_bool("gradcheck.flip_sign");
  c.seed = seed();
  return c;
}

}  // namespace fttab
