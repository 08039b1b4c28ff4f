#include "fttab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fttab/errors.hpp"

namespace fttab {

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// out[n,d] += a[n,k] * b[k,d]
__attribute__((target_clones("avx2", "default"))) void gemm_nn(const double* a, const double* b, double* out, std::size_t n, std::size_t k, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out + i * d;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* br = b + p * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += av * br[j];
    }
  }
}

// out[n,k] += g[n,d] * b[k,d]^T, via an explicit transpose so the inner loop
// is a contiguous axpy.
void gemm_nt(const double* g, const double* b, double* out, std::size_t n, std::size_t k, std::size_t d) {
  std::vector<double> bt(d * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < d; ++j) bt[j * k + p] = b[p * d + j];
  gemm_nn(g, bt.data(), out, n, d, k);
}

// out[k,d] += a[n,k]^T * g[n,d]
__attribute__((target_clones("avx2", "default"))) void gemm_tn(const double* a, const double* g, double* out, std::size_t n, std::size_t k, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* gr = g + i * d;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* o = out + p * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += av * gr[j];
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), d = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(n * d, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), n, k, d);
  return make_result(
      {n, d}, std::move(out), {a, b},
      [n, k, d](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) gemm_nt(self.grad.data(), pb.data.data(), pa.grad_buffer().data(), n, k, d);
        if (pb.requires_grad) gemm_tn(pa.data.data(), self.grad.data(), pb.grad_buffer().data(), n, k, d);
      },
      "matmul");
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
  auto y = matmul(x, weight);
  if (bias) y = add_bias(y, *bias);
  return y;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto src = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  return make_result(
      {c, r}, std::move(out), {a},
      [r, c](detail::Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
      },
      "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& self) {
        self.parents[0]->accumulate(self.grad);
        self.parents[1]->accumulate(self.grad);
      },
      "add");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          auto g = pa.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
          auto g = pb.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(
      a.shape(), std::move(out), {a},
      [factor](detail::Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
      },
      "scale");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t n = x.rows(), d = x.cols();
  if (bias.numel() != d) {
    throw DimensionError("bias of shape " + shape_string(bias.shape()) + " does not fit rows of width " +
                         std::to_string(d));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += b[j];
  return make_result(
      x.shape(), std::move(out), {x, bias},
      [n, d](detail::Node& self) {
        self.parents[0]->accumulate(self.grad);
        auto& pb = *self.parents[1];
        if (pb.requires_grad) {
          auto g = pb.grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
        }
      },
      "add_bias");
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result(
      {}, {total}, {a},
      [](detail::Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (auto& v : g) v += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw PreconditionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return make_result(
      a.shape(), std::move(out), {a},
      [](detail::Node& self) {
        auto& p = *self.parents[0];
        auto g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = p.data[i];
          const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
          const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
          g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
      },
      "gelu");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) throw DimensionError("layer_norm affine parameters must have width d");
  std::vector<double> normalized(n * d), inv_std(n), out(n * d);
  auto src = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = src.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += r[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      normalized[i * d + j] = (r[j] - mu) * inv_std[i];
      out[i * d + j] = normalized[i * d + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [n, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& dy = self.grad;
        if (pg.requires_grad) {
          auto g = pg.grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j] * normalized[i * d + j];
        }
        if (pb.requires_grad) {
          auto g = pb.grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j];
        }
        if (px.requires_grad) {
          auto g = px.grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < n; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxhat = dy[i * d + j] * pg.data[j];
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * normalized[i * d + j];
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxhat = dy[i * d + j] * pg.data[j];
              g[i * d + j] += inv_std[i] * (dxhat - mean_dxhat - normalized[i * d + j] * mean_dxhat_xhat);
            }
          }
        }
      },
      "layer_norm");
}

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask,
                        std::size_t heads) {
  require_matrix(q, "masked_attention");
  require_same_shape(q, k, "masked_attention");
  require_same_shape(q, v, "masked_attention");
  const std::size_t t = q.rows(), d = q.cols();
  if (mask.size != t) {
    throw DimensionError("attention mask of size " + std::to_string(mask.size) + " for " + std::to_string(t) +
                         " tokens");
  }
  if (heads == 0 || d % heads != 0) throw DimensionError("model width must be divisible by the head count");
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[h][i][j]
  std::vector<double> probs(heads * t * t, 0.0);
  std::vector<double> out(t * d, 0.0);
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();
  std::vector<double> scores(t);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < t; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      bool any_allowed = false;
      for (std::size_t j = 0; j < t; ++j) {
        if (!mask(i, j)) continue;
        any_allowed = true;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qd[i * d + off + c] * kd[j * d + off + c];
        scores[j] = s * inv_scale;
        // NaN scores propagate to the output so callers can report them.
        if (std::isnan(scores[j]) || scores[j] > mx) mx = scores[j];
      }
      if (!any_allowed) throw PreconditionError("attention row " + std::to_string(i) + " has no allowed keys");
      double z = 0.0;
      double* p = probs.data() + (h * t + i) * t;
      for (std::size_t j = 0; j < t; ++j) {
        if (!mask(i, j)) continue;
        p[j] = std::exp(scores[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j < t; ++j) {
        if (!mask(i, j)) continue;
        p[j] /= z;
        const double w = p[j];
        for (std::size_t c = 0; c < dh; ++c) out[i * d + off + c] += w * vd[j * d + off + c];
      }
    }
  }

  return make_result(
      {t, d}, std::move(out), {q, k, v},
      [t, d, heads, dh, inv_scale, probs = std::move(probs)](detail::Node& self) {
        auto& pq = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pv = *self.parents[2];
        const auto& dout = self.grad;
        std::vector<double> dscore(t);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < t; ++i) {
            const double* p = probs.data() + (h * t + i) * t;
            double weighted = 0.0;
            for (std::size_t j = 0; j < t; ++j) {
              if (p[j] == 0.0) {
                dscore[j] = 0.0;
                continue;
              }
              double dp = 0.0;
              for (std::size_t c = 0; c < dh; ++c) dp += dout[i * d + off + c] * pv.data[j * d + off + c];
              dscore[j] = dp;
              weighted += p[j] * dp;
            }
            for (std::size_t j = 0; j < t; ++j) dscore[j] = p[j] * (dscore[j] - weighted) * inv_scale;
            if (pv.requires_grad) {
              auto g = pv.grad_buffer();
              for (std::size_t j = 0; j < t; ++j) {
                if (p[j] == 0.0) continue;
                for (std::size_t c = 0; c < dh; ++c) g[j * d + off + c] += p[j] * dout[i * d + off + c];
              }
            }
            if (pq.requires_grad) {
              auto g = pq.grad_buffer();
              for (std::size_t j = 0; j < t; ++j) {
                if (dscore[j] == 0.0) continue;
                for (std::size_t c = 0; c < dh; ++c) g[i * d + off + c] += dscore[j] * pk.data[j * d + off + c];
              }
            }
            if (pk.requires_grad) {
              auto g = pk.grad_buffer();
              for (std::size_t j = 0; j < t; ++j) {
                if (dscore[j] == 0.0) continue;
                for (std::size_t c = 0; c < dh; ++c) g[j * d + off + c] += dscore[j] * pq.data[i * d + off + c];
              }
            }
          }
        }
      },
      "masked_attention");
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "select_rows");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(rows.size() * d);
  auto src = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw IndexError("row " + std::to_string(rows[r]) + " out of range for " + std::to_string(n) + " rows");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result(
      {rows.size(), d}, std::move(out), {x},
      [d, idx = std::move(idx)](detail::Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
      },
      "select_rows");
}

Tensor row(const Tensor& x, std::size_t r) {
  const std::size_t idx[] = {r};
  return select_rows(x, idx).reshape({x.cols()});
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t n = x.rows(), d = x.cols();
  if (begin > end || end > d) throw IndexError("column slice out of range");
  const std::size_t w = end - begin;
  std::vector<double> out(n * w);
  auto src = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = src[i * d + begin + j];
  return make_result(
      {n, w}, std::move(out), {x},
      [n, d, w, begin](detail::Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * d + begin + j] += self.grad[i * w + j];
      },
      "slice_cols");
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_rows");
  require_matrix(b, "concat_rows");
  if (a.cols() != b.cols()) throw DimensionError("concat_rows column mismatch");
  const std::size_t na = a.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return make_result(
      {a.rows() + b.rows(), a.cols()}, std::move(out), {a, b},
      [na](detail::Node& self) {
        std::span<const double> g(self.grad);
        self.parents[0]->accumulate(g.first(na));
        self.parents[1]->accumulate(g.subspan(na));
      },
      "concat_rows");
}

Tensor normalize_rows(const Tensor& x, double eps) {
  require_matrix(x, "normalize_rows");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> norms(n), out(n * d);
  auto src = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += src[i * d + j] * src[i * d + j];
    norms[i] = std::sqrt(s);
    const double denom = std::max(norms[i], eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = src[i * d + j] / denom;
  }
  return make_result(
      x.shape(), std::move(out), {x},
      [n, d, eps, norms = std::move(norms)](detail::Node& self) {
        auto& p = *self.parents[0];
        auto g = p.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const double r = norms[i];
          const double denom = std::max(r, eps);
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * p.data[i * d + j];
          // Below the guard the row is scaled by the constant 1/eps.
          const double radial = r > eps ? dot / (r * r * r) : 0.0;
          for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i * d + j] / denom - p.data[i * d + j] * radial;
        }
      },
      "normalize_rows");
}

Tensor cosine_gram(const Tensor& x, double eps) {
  require_matrix(x, "cosine_gram");
  const std::size_t m = x.rows(), d = x.cols();
  auto src = x.data();
  std::vector<double> dots(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += src[i * d + k] * src[j * d + k];
      dots[i * m + j] = dots[j * m + i] = s;
    }
  const double floor = eps * eps;
  std::vector<double> sq(m), out(m * m);
  for (std::size_t i = 0; i < m; ++i) sq[i] = std::max(dots[i * m + i], floor);
  // sqrt(s * s) == s for correctly rounded sqrt, so identical rows give exactly 1.
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = dots[i * m + j] / std::sqrt(sq[i] * sq[j]);
  return make_result(
      {m, m}, std::move(out), {x},
      [m, d, eps, dots = std::move(dots)](detail::Node& self) {
        auto& p = *self.parents[0];
        auto g = p.grad_buffer();
        std::vector<double> norm(m), unit(m * d), du(m * d, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          norm[i] = std::sqrt(dots[i * m + i]);
          const double denom = std::max(norm[i], eps);
          for (std::size_t k = 0; k < d; ++k) unit[i * d + k] = p.data[i * d + k] / denom;
        }
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double w = self.grad[i * m + j] + self.grad[j * m + i];
            for (std::size_t k = 0; k < d; ++k) du[i * d + k] += w * unit[j * d + k];
          }
        for (std::size_t i = 0; i < m; ++i) {
          const double r = norm[i];
          const double denom = std::max(r, eps);
          double dot = 0.0;
          for (std::size_t k = 0; k < d; ++k) dot += du[i * d + k] * p.data[i * d + k];
          const double radial = r > eps ? dot / (r * r * r) : 0.0;
          for (std::size_t k = 0; k < d; ++k) g[i * d + k] += du[i * d + k] / denom - p.data[i * d + k] * radial;
        }
      },
      "cosine_gram");
}

Tensor offdiag_square_sum(const Tensor& g) {
  require_matrix(g, "offdiag_square_sum");
  const std::size_t m = g.rows();
  if (g.cols() != m) throw DimensionError("offdiag_square_sum needs a square matrix");
  double total = 0.0;
  auto src = g.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) total += src[i * m + j] * src[i * m + j];
  return make_result(
      {}, {total}, {g},
      [m](detail::Node& self) {
        auto& p = *self.parents[0];
        auto gb = p.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j)
            if (i != j) gb[i * m + j] += 2.0 * p.data[i * m + j] * self.grad[0];
      },
      "offdiag_square_sum");
}

Tensor ordered_sum(std::span<const Tensor> terms) {
  if (terms.empty()) throw PreconditionError("ordered_sum of an empty list");
  const Shape& shape = terms.front().shape();
  for (const auto& t : terms) require_same_shape(terms.front(), t, "ordered_sum");
  const std::size_t len = terms.front().numel();
  std::vector<double> out(len);
  std::vector<double> column(terms.size());
  for (std::size_t c = 0; c < len; ++c) {
    for (std::size_t t = 0; t < terms.size(); ++t) column[t] = terms[t].data()[c];
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (double v : column) acc += v;
    out[c] = acc;
  }
  return make_result(
      shape, std::move(out), std::vector<Tensor>(terms.begin(), terms.end()),
      [](detail::Node& self) {
        for (auto& p : self.parents) p->accumulate(self.grad);
      },
      "ordered_sum");
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "softmax_cross_entropy");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) throw DimensionError("label count does not match logit rows");
  if (n == 0) throw PreconditionError("softmax_cross_entropy over zero rows");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw IndexError("label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
    }
  }
  auto probs = softmax_rows(logits.data(), c);
  auto src = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = src.data() + i * c;
    const double mx = *std::max_element(r, r + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(r[j] - mx);
    total += (mx + std::log(z)) - r[labels[i]];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<int> y(labels.begin(), labels.end());
  return make_result(
      {}, {total * inv_n}, {logits},
      [n, c, inv_n, probs = std::move(probs), y = std::move(y)](detail::Node& self) {
        auto g = self.parents[0]->grad_buffer();
        const double up = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double target = static_cast<std::size_t>(y[i]) == j ? 1.0 : 0.0;
            g[i * c + j] += up * (probs[i * c + j] - target);
          }
        }
      },
      "softmax_cross_entropy");
}

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols) {
  std::vector<double> out(logits.size());
  if (cols == 0) return out;
  const std::size_t n = logits.size() / cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = logits.data() + i * cols;
    const double mx = *std::max_element(r, r + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[i * cols + j] = std::exp(r[j] - mx);
      z += out[i * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] /= z;
  }
  return out;
}

}  // namespace fttab
