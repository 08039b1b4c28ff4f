#include "fttab/grad_suite.hpp"

#include "fttab/errors.hpp"
#include "fttab/finetune.hpp"
#include "fttab/ops.hpp"
#include "fttab/random.hpp"

namespace fttab {

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, bool requires_grad = false) {
  Tensor t({r, c});
  fill_normal(t.data(), 1.0, rng);
  t.set_requires_grad(requires_grad);
  return t;
}

// Weighted sum so every output entry gets a distinct upstream gradient.
Tensor project(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

EncodedRows random_rows(std::size_t count, std::size_t numerical, const CategoricalTokenTable& table, Rng& rng) {
  EncodedRows rows;
  rows.count = count;
  rows.numerical = numerical;
  rows.categorical = table.offsets().size();
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < count * numerical; ++i) rows.num.push_back(normal(rng));
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t j = 0; j < rows.categorical; ++j) {
      // Roughly one cell in five is missing.
      const bool missing = uniform_index(rng, 0, 4) == 0;
      rows.cat.push_back(missing ? CategoricalTokenTable::kNanRow
                                 : table.offsets()[j] + uniform_index(rng, 0, table.sizes()[j] - 1));
    }
  }
  return rows;
}

}  // namespace

std::vector<ComponentCheck> run_grad_suite(const GradSuiteConfig& cfg) {
  cfg.model.validate();
  if (cfg.support < 1 || cfg.query < 1) throw ConfigError("gradcheck: need at least one support and one query row");
  if (cfg.numerical > cfg.model.max_features) throw ConfigError("gradcheck: numerical columns exceed max_features");
  Rng rng(cfg.seed);
  const std::size_t d = cfg.model.d;
  const std::size_t tokens = cfg.support + cfg.query;

  auto backbone = PfnBackbone::initialize(cfg.model, derive_seed(cfg.seed, 1));
  backbone.set_trainable(true);
  auto table = CategoricalTokenTable::initialize(cfg.category_counts, d, rng, true);
  std::optional<FeatureIdentifiers> ids;
  if (!cfg.category_counts.empty()) ids = FeatureIdentifiers::initialize(cfg.category_counts.size(), d, rng, true);

  SupportQueryBatch batch;
  batch.support_x = random_rows(cfg.support, cfg.numerical, table, rng);
  batch.query_x = random_rows(cfg.query, cfg.numerical, table, rng);
  batch.num_classes = cfg.model.max_classes;
  for (std::size_t i = 0; i < cfg.support; ++i) batch.support_y.push_back(static_cast<int>(i % batch.num_classes));
  for (std::size_t i = 0; i < cfg.query; ++i) batch.query_y.push_back(static_cast<int>((i + 1) % batch.num_classes));

  std::vector<ComponentCheck> out;

  {
    FeatureTokenizer ft(random_matrix(cfg.numerical, d, rng, true), table, ids);
    const EncodedRows rows = batch.support_x;
    const Tensor weights = random_matrix(rows.count, d, rng);
    out.push_back({"ft_layer", grad_check([&] { return project(ft.embed(rows), weights); }, ft.parameters(), cfg.options)});
  }
  {
    Tensor input = random_matrix(tokens, d, rng, true);
    const Tensor weights = random_matrix(tokens, d, rng);
    const auto mask = build_mask(cfg.support, cfg.query);
    ParameterList params{{"encoder.input", input, {}}};
    for (const auto& p : backbone.parameters())
      if (p.name.find(".layer") != std::string::npos) params.push_back(p);
    out.push_back({"encoder", grad_check([&] { return project(encoder_forward(input, mask, backbone.layers, cfg.model.heads), weights); },
                                         params, cfg.options)});
  }
  {
    FeatureTokenizer ft(random_matrix(cfg.numerical, d, rng, false), table, ids);
    const Tensor weights = random_matrix(cfg.support, d, rng);
    ParameterList params{{"backbone.label_embedding", backbone.label_embedder.weight, {}}};
    out.push_back({"label_embedder",
                   grad_check([&] { return project(embed_support(batch.support_x, batch.support_y, ft, backbone.label_embedder), weights); },
                              params, cfg.options)});
  }
  {
    FtModel model;
    model.backbone = backbone;
    model.tokenizer = shared_tokenizer(backbone, cfg.numerical, table, ids);
    model.classes.resize(batch.num_classes);
    FinetuneConfig fc;
    fc.lambda_orth = cfg.lambda_orth;
    auto params = backbone.parameters();
    for (const auto& p : model.tokenizer.parameters())
      if (p.name != "ft.numerical_weights") params.push_back(p);
    // The tokenizer's W_num is a view of the input embedding, so checking the
    // backbone parameters covers it; rebuild it on every evaluation.
    out.push_back({"total_loss",
                   grad_check(
                       [&] {
                         model.tokenizer = shared_tokenizer(backbone, cfg.numerical, table, ids);
                         return total_loss(batch, model, fc);
                       },
                       params, cfg.options)});
  }
  return out;
}

}  // namespace fttab
