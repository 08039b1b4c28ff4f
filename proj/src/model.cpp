#include "fttab/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fttab/errors.hpp"
#include "fttab/random.hpp"

namespace fttab {

namespace {

Tensor normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t({rows, cols}, true);
  fill_normal(t.data(), stddev, rng);
  return t;
}

Tensor constant_vector(std::size_t n, double value) {
  return Tensor({n}, std::vector<double>(n, value), true);
}

Tensor copy_param(const Tensor& t) { return t.clone(t.requires_grad()); }

}  // namespace

void ModelConfig::validate() const {
  if (d == 0) throw ConfigError("model.d must be positive");
  if (heads == 0 || d % heads != 0) throw ConfigError("model.d must be divisible by model.heads");
  if (layers < 1) throw ConfigError("model.layers must be at least 1");
  if (ff_dim == 0) throw ConfigError("model.ff_dim must be positive");
  if (max_classes < 2) throw ConfigError("model.max_classes must be at least 2");
  if (max_features == 0) throw ConfigError("model.max_features must be positive");
}

void SupportQueryBatch::validate(std::size_t max_classes) const {
  if (support_x.count == 0) throw PreconditionError("episode needs at least one support row");
  if (query_x.count == 0) throw PreconditionError("episode needs at least one query row");
  if (support_y.size() != support_x.count) throw DimensionError("support label count differs from support rows");
  if (!query_y.empty() && query_y.size() != query_x.count) throw DimensionError("query label count differs from query rows");
  if (num_classes < 2 || num_classes > max_classes) {
    throw PreconditionError("episode class count " + std::to_string(num_classes) + " outside [2," +
                            std::to_string(max_classes) + "]");
  }
  if (support_x.numerical != query_x.numerical || support_x.categorical != query_x.categorical) {
    throw SchemaError("support and query rows have different feature layouts");
  }
  auto check = [&](const std::vector<int>& ys) {
    for (int y : ys)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw IndexError("label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
      }
  };
  check(support_y);
  check(query_y);
}

Tensor LabelEmbedder::embed(std::span<const int> labels) const {
  std::vector<double> y(labels.begin(), labels.end());
  return matmul(Tensor({labels.size(), 1}, std::move(y)), weight);
}

PfnBackbone PfnBackbone::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.d;
  const double s_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double s_ff = 1.0 / std::sqrt(static_cast<double>(config.ff_dim));
  const double residual = 1.0 / std::sqrt(2.0 * static_cast<double>(config.layers));

  PfnBackbone b;
  b.config = config;
  b.input_embedding = normal_matrix(config.max_features, d, s_d, rng);
  b.label_embedder.weight = normal_matrix(1, d, s_d, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderLayer layer;
    layer.norm1_gain = constant_vector(d, 1.0);
    layer.norm1_bias = constant_vector(d, 0.0);
    layer.query_weight = normal_matrix(d, d, s_d, rng);
    layer.query_bias = constant_vector(d, 0.0);
    layer.key_weight = normal_matrix(d, d, s_d, rng);
    layer.key_bias = constant_vector(d, 0.0);
    layer.value_weight = normal_matrix(d, d, s_d, rng);
    layer.value_bias = constant_vector(d, 0.0);
    layer.out_weight = normal_matrix(d, d, s_d * residual, rng);
    layer.out_bias = constant_vector(d, 0.0);
    layer.norm2_gain = constant_vector(d, 1.0);
    layer.norm2_bias = constant_vector(d, 0.0);
    layer.ff_in_weight = normal_matrix(d, config.ff_dim, s_d, rng);
    layer.ff_in_bias = constant_vector(config.ff_dim, 0.0);
    layer.ff_out_weight = normal_matrix(config.ff_dim, d, s_ff * residual, rng);
    layer.ff_out_bias = constant_vector(d, 0.0);
    b.layers.push_back(std::move(layer));
  }
  b.final_gain = constant_vector(d, 1.0);
  b.final_bias = constant_vector(d, 0.0);
  b.head_weight = normal_matrix(d, config.max_classes, s_d, rng);
  b.head_bias = constant_vector(config.max_classes, 0.0);
  return b;
}

ParameterList PfnBackbone::parameters() const {
  ParameterList p;
  p.push_back({"backbone.input_embedding", input_embedding, {}});
  p.push_back({"backbone.label_embedding", label_embedder.weight, {}});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string pre = "backbone.layer" + std::to_string(l) + ".";
    p.push_back({pre + "norm1_gain", L.norm1_gain, {}});
    p.push_back({pre + "norm1_bias", L.norm1_bias, {}});
    p.push_back({pre + "query_weight", L.query_weight, {}});
    p.push_back({pre + "query_bias", L.query_bias, {}});
    p.push_back({pre + "key_weight", L.key_weight, {}});
    p.push_back({pre + "key_bias", L.key_bias, {}});
    p.push_back({pre + "value_weight", L.value_weight, {}});
    p.push_back({pre + "value_bias", L.value_bias, {}});
    p.push_back({pre + "out_weight", L.out_weight, {}});
    p.push_back({pre + "out_bias", L.out_bias, {}});
    p.push_back({pre + "norm2_gain", L.norm2_gain, {}});
    p.push_back({pre + "norm2_bias", L.norm2_bias, {}});
    p.push_back({pre + "ff_in_weight", L.ff_in_weight, {}});
    p.push_back({pre + "ff_in_bias", L.ff_in_bias, {}});
    p.push_back({pre + "ff_out_weight", L.ff_out_weight, {}});
    p.push_back({pre + "ff_out_bias", L.ff_out_bias, {}});
  }
  auto head = head_parameters();
  p.insert(p.end(), head.begin(), head.end());
  return p;
}

ParameterList PfnBackbone::head_parameters() const {
  return {{"backbone.final_gain", final_gain, {}},
          {"backbone.final_bias", final_bias, {}},
          {"backbone.head_weight", head_weight, {}},
          {"backbone.head_bias", head_bias, {}}};
}

void PfnBackbone::set_trainable(bool on) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

PfnBackbone PfnBackbone::clone() const {
  PfnBackbone b;
  b.config = config;
  b.input_embedding = copy_param(input_embedding);
  b.label_embedder.weight = copy_param(label_embedder.weight);
  for (const auto& L : layers) {
    b.layers.push_back(EncoderLayer{copy_param(L.norm1_gain), copy_param(L.norm1_bias), copy_param(L.query_weight),
                                    copy_param(L.query_bias), copy_param(L.key_weight), copy_param(L.key_bias),
                                    copy_param(L.value_weight), copy_param(L.value_bias), copy_param(L.out_weight),
                                    copy_param(L.out_bias), copy_param(L.norm2_gain), copy_param(L.norm2_bias),
                                    copy_param(L.ff_in_weight), copy_param(L.ff_in_bias), copy_param(L.ff_out_weight),
                                    copy_param(L.ff_out_bias)});
  }
  b.final_gain = copy_param(final_gain);
  b.final_bias = copy_param(final_bias);
  b.head_weight = copy_param(head_weight);
  b.head_bias = copy_param(head_bias);
  return b;
}

AttentionMask build_mask(std::size_t support, std::size_t query) {
  if (support == 0 || query == 0) throw PreconditionError("mask needs at least one support and one query");
  const std::size_t t = support + query;
  AttentionMask mask{t, std::vector<bool>(t * t, false)};
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < support; ++j) mask.allowed[i * t + j] = true;
    if (i >= support) mask.allowed[i * t + i] = true;
  }
  return mask;
}

Tensor embed_query(const EncodedRows& rows, const FeatureTokenizer& tokenizer) { return tokenizer.embed(rows); }

Tensor embed_support(const EncodedRows& rows, std::span<const int> labels, const FeatureTokenizer& tokenizer,
                     const LabelEmbedder& label_embedder) {
  if (labels.size() != rows.count) throw DimensionError("label count differs from row count");
  for (int y : labels)
    if (y < 0) throw IndexError("negative class label");
  return add(embed_query(rows, tokenizer), label_embedder.embed(labels));
}

Tensor encoder_forward(const Tensor& embeddings, const AttentionMask& mask, std::span<const EncoderLayer> layers,
                       std::size_t heads) {
  if (mask.size != embeddings.rows()) throw DimensionError("mask size does not match token count");
  Tensor h = embeddings;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.query_weight.rows() != h.cols()) throw DimensionError("embedding width does not match layer width");
    Tensor a = layer_norm(h, L.norm1_gain, L.norm1_bias);
    Tensor q = linear_forward(a, L.query_weight, L.query_bias);
    Tensor k = linear_forward(a, L.key_weight, L.key_bias);
    Tensor v = linear_forward(a, L.value_weight, L.value_bias);
    Tensor attn = linear_forward(masked_attention(q, k, v, mask, heads), L.out_weight, L.out_bias);
    h = add(h, attn);
    Tensor f = layer_norm(h, L.norm2_gain, L.norm2_bias);
    f = linear_forward(gelu(linear_forward(f, L.ff_in_weight, L.ff_in_bias)), L.ff_out_weight, L.ff_out_bias);
    h = add(h, f);
    if (!all_finite(h.data())) throw NumericError("non-finite activations after encoder layer " + std::to_string(l));
  }
  return h;
}

Tensor predict_logits(const SupportQueryBatch& batch, const PfnBackbone& backbone, const FeatureTokenizer& tokenizer) {
  batch.validate(backbone.config.max_classes);
  if (tokenizer.dim() != backbone.config.d) throw DimensionError("tokenizer width differs from model width");
  const std::size_t s = batch.support_x.count, q = batch.query_x.count;
  Tensor support = embed_support(batch.support_x, batch.support_y, tokenizer, backbone.label_embedder);
  Tensor query = embed_query(batch.query_x, tokenizer);
  Tensor h = encoder_forward(concat_rows(support, query), build_mask(s, q), backbone.layers, backbone.config.heads);
  std::vector<std::size_t> query_rows(q);
  std::iota(query_rows.begin(), query_rows.end(), s);
  Tensor hq = layer_norm(select_rows(h, query_rows), backbone.final_gain, backbone.final_bias);
  Tensor logits = linear_forward(hq, backbone.head_weight, backbone.head_bias);
  return slice_cols(logits, 0, batch.num_classes);
}

std::vector<double> predict_proba(const SupportQueryBatch& batch, const PfnBackbone& backbone,
                                  const FeatureTokenizer& tokenizer) {
  NoGradGuard guard;
  Tensor logits = predict_logits(batch, backbone, tokenizer);
  return softmax_rows(logits.data(), logits.cols());
}

FeatureTokenizer shared_tokenizer(const PfnBackbone& backbone, std::size_t numerical, CategoricalTokenTable table,
                                  std::optional<FeatureIdentifiers> ids) {
  if (numerical > backbone.config.max_features) {
    throw SchemaError(std::to_string(numerical) + " numerical columns exceed model.max_features=" +
                      std::to_string(backbone.config.max_features));
  }
  std::vector<std::size_t> rows(numerical);
  std::iota(rows.begin(), rows.end(), 0);
  return FeatureTokenizer(select_rows(backbone.input_embedding, rows), std::move(table), std::move(ids));
}

}  // namespace fttab
