#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fttab/tensor.hpp"

namespace fttab {

// Boolean attention mask, row-major [size x size]; true = may attend.
struct AttentionMask {
  std::size_t size = 0;
  std::vector<bool> allowed;

  bool operator()(std::size_t from, std::size_t to) const { return allowed[from * size + to]; }
};

/// y = x W (+ b). x: [n,k], W: [k,d], b: [d].
Tensor linear_forward(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias = std::nullopt);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds bias [d] to every row of x [n,d].
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor gelu(const Tensor& a);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Multi-head scaled dot-product attention. q, k, v: [T,d]; heads split the
/// feature axis evenly. Disallowed positions get exactly zero weight.
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask,
                        std::size_t heads);

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);
/// Row r of a matrix as a rank-1 tensor [cols].
Tensor row(const Tensor& x, std::size_t r);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(const Tensor& a, const Tensor& b);

/// Divides every row by max(its L2 norm, eps).
Tensor normalize_rows(const Tensor& x, double eps);
/// Cosine similarities of the rows of x, [m, m]; rows with norm below eps
/// are treated as having norm eps.
Tensor cosine_gram(const Tensor& x, double eps);
/// Sum of squared off-diagonal entries of a square matrix.
Tensor offdiag_square_sum(const Tensor& g);

/// Elementwise sum of equal-shape tensors, accumulated per coordinate in
/// ascending value order so the result does not depend on argument order.
Tensor ordered_sum(std::span<const Tensor> terms);

/// Mean over rows of -log softmax(logits)[label], log-sum-exp stabilized.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row softmax of a plain matrix (no gradient).
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols);

bool all_finite(std::span<const double> values);

}  // namespace fttab
