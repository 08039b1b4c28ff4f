#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fttab/feature_tokenizer.hpp"
#include "fttab/ops.hpp"
#include "fttab/optim.hpp"
#include "fttab/tensor.hpp"

namespace fttab {

struct ModelConfig {
  std::size_t d = 64;
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  std::size_t max_classes = 10;
  // Rows of the backbone input embedding; bounds the numerical column count.
  std::size_t max_features = 32;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// One in-context episode: labeled support rows and query rows to predict.
struct SupportQueryBatch {
  EncodedRows support_x;
  std::vector<int> support_y;
  EncodedRows query_x;
  // Optional; only the loss reads these.
  std::vector<int> query_y;
  std::size_t num_classes = 2;

  void validate(std::size_t max_classes) const;
};

// Scalar-input label embedding: y -> y * W_y.
struct LabelEmbedder {
  Tensor weight;  // [1, d]

  Tensor embed(std::span<const int> labels) const;
};

struct EncoderLayer {
  Tensor norm1_gain, norm1_bias;
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor out_weight, out_bias;
  Tensor norm2_gain, norm2_bias;
  Tensor ff_in_weight, ff_in_bias;
  Tensor ff_out_weight, ff_out_bias;
};

/// Transformer encoder stack with its input/label embeddings and the
/// classification head.
struct PfnBackbone {
  ModelConfig config;
  Tensor input_embedding;  // [max_features, d]
  LabelEmbedder label_embedder;
  std::vector<EncoderLayer> layers;
  Tensor final_gain, final_bias;
  Tensor head_weight;  // [d, max_classes]
  Tensor head_bias;    // [max_classes]

  static PfnBackbone initialize(const ModelConfig& config, std::uint64_t seed);

  // Every tensor with a stable name, in checkpoint order.
  ParameterList parameters() const;
  // Head parameters only (final norm + linear head).
  ParameterList head_parameters() const;
  void set_trainable(bool on);
  PfnBackbone clone() const;
};

/// Supports attend to all supports; each query attends to all supports and
/// to itself.
AttentionMask build_mask(std::size_t support, std::size_t query);

Tensor embed_query(const EncodedRows& rows, const FeatureTokenizer& tokenizer);
Tensor embed_support(const EncodedRows& rows, std::span<const int> labels, const FeatureTokenizer& tokenizer,
                     const LabelEmbedder& label_embedder);

/// Pre-norm encoder layers; throws NumericError naming the first layer whose
/// output is non-finite.
Tensor encoder_forward(const Tensor& embeddings, const AttentionMask& mask, std::span<const EncoderLayer> layers,
                       std::size_t heads);

/// Query logits [q, num_classes] from one forward pass.
Tensor predict_logits(const SupportQueryBatch& batch, const PfnBackbone& backbone, const FeatureTokenizer& tokenizer);
/// Softmax of predict_logits, row-major [q, num_classes].
std::vector<double> predict_proba(const SupportQueryBatch& batch, const PfnBackbone& backbone,
                                  const FeatureTokenizer& tokenizer);

/// Tokenizer whose numerical weights are the first n rows of the backbone
/// input embedding (gradients reach the backbone).
FeatureTokenizer shared_tokenizer(const PfnBackbone& backbone, std::size_t numerical, CategoricalTokenTable table,
                                  std::optional<FeatureIdentifiers> ids);

}  // namespace fttab
