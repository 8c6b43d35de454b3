#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "imupose/tensor.hpp"

namespace imupose {

namespace detail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix products. All dense math funnels through these three so that Eigen
// provides the kernels for forward and backward alike.
// ---------------------------------------------------------------------------

// [m,k] x [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: bad shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_result({m, n}, a.requires_grad() || b.requires_grad());
  detail::ECMap A(a.data(), m, k);
  detail::ECMap B(b.data(), k, n);
  detail::EMap(out.data(), m, n).noalias() = A * B;
  if (out.requires_grad()) {
    attach_parents(out, {a, b});
    auto an = a.node();
    auto bn = b.node();
    out.node()->backward = [an, bn, m, k, n](const std::vector<double>& g, GradMap& grads) {
      detail::ECMap G(g.data(), m, n);
      if (an->requires_grad) {
        detail::ECMap B(bn->value->data(), k, n);
        auto [da, fresh] = grads.accum_fresh(an.get());
        detail::EMap D(da->data(), m, k);
        if (fresh)
          D.noalias() = G * B.transpose();
        else
          D.noalias() += G * B.transpose();
      }
      if (bn->requires_grad) {
        detail::ECMap A(an->value->data(), m, k);
        auto [db, fresh] = grads.accum_fresh(bn.get());
        detail::EMap D(db->data(), k, n);
        if (fresh)
          D.noalias() = A.transpose() * G;
        else
          D.noalias() += A.transpose() * G;
      }
    };
  }
  return out;
}

// Batched [**,m,k] x [**,k,n] -> [**,m,n]; leading batch extents must match.
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank())
    throw std::invalid_argument("bmm: rank mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int r = a.rank();
  int64_t batch = 1;
  for (int i = 0; i < r - 2; ++i) {
    if (a.shape()[i] != b.shape()[i]) throw std::invalid_argument("bmm: batch extent mismatch");
    batch *= a.shape()[i];
  }
  const int64_t m = a.dim(r - 2), k = a.dim(r - 1), n = b.dim(r - 1);
  if (b.dim(r - 2) != k)
    throw std::invalid_argument("bmm: inner extent mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape oshape(a.shape().begin(), a.shape().end() - 1);
  oshape.back() = m;
  oshape.push_back(n);
  Tensor out = make_result(oshape, a.requires_grad() || b.requires_grad());
  for (int64_t i = 0; i < batch; ++i) {
    detail::ECMap A(a.data() + i * m * k, m, k);
    detail::ECMap B(b.data() + i * k * n, k, n);
    detail::EMap(out.data() + i * m * n, m, n).noalias() = A * B;
  }
  if (out.requires_grad()) {
    attach_parents(out, {a, b});
    auto an = a.node();
    auto bn = b.node();
    out.node()->backward = [an, bn, batch, m, k, n](const std::vector<double>& g, GradMap& grads) {
      // Slices partition each parent, so the first visit may overwrite.
      bool fa = false, fb = false;
      double* da = nullptr;
      double* db = nullptr;
      if (an->requires_grad) {
        auto r = grads.accum_fresh(an.get());
        da = r.first->data();
        fa = r.second;
      }
      if (bn->requires_grad) {
        auto r = grads.accum_fresh(bn.get());
        db = r.first->data();
        fb = r.second;
      }
      for (int64_t i = 0; i < batch; ++i) {
        detail::ECMap G(g.data() + i * m * n, m, n);
        if (da) {
          detail::ECMap B(bn->value->data() + i * k * n, k, n);
          detail::EMap D(da + i * m * k, m, k);
          if (fa)
            D.noalias() = G * B.transpose();
          else
            D.noalias() += G * B.transpose();
        }
        if (db) {
          detail::ECMap A(an->value->data() + i * m * k, m, k);
          detail::EMap D(db + i * k * n, k, n);
          if (fb)
            D.noalias() = A.transpose() * G;
          else
            D.noalias() += A.transpose() * G;
        }
      }
    };
  }
  return out;
}

// Batched [**,m,k] x [**,n,k]^T -> [**,m,n]; the attention-score product.
inline Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank())
    throw std::invalid_argument("bmm_nt: rank mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int r = a.rank();
  int64_t batch = 1;
  for (int i = 0; i < r - 2; ++i) {
    if (a.shape()[i] != b.shape()[i]) throw std::invalid_argument("bmm_nt: batch extent mismatch");
    batch *= a.shape()[i];
  }
  const int64_t m = a.dim(r - 2), k = a.dim(r - 1), n = b.dim(r - 2);
  if (b.dim(r - 1) != k)
    throw std::invalid_argument("bmm_nt: inner extent mismatch " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  Shape oshape(a.shape().begin(), a.shape().end() - 1);
  oshape.back() = m;
  oshape.push_back(n);
  Tensor out = make_result(oshape, a.requires_grad() || b.requires_grad());
  for (int64_t i = 0; i < batch; ++i) {
    detail::ECMap A(a.data() + i * m * k, m, k);
    detail::ECMap B(b.data() + i * n * k, n, k);
    detail::EMap(out.data() + i * m * n, m, n).noalias() = A * B.transpose();
  }
  if (out.requires_grad()) {
    attach_parents(out, {a, b});
    auto an = a.node();
    auto bn = b.node();
    out.node()->backward = [an, bn, batch, m, k, n](const std::vector<double>& g, GradMap& grads) {
      // Slices partition each parent, so the first visit may overwrite.
      bool fa = false, fb = false;
      double* da = nullptr;
      double* db = nullptr;
      if (an->requires_grad) {
        auto r = grads.accum_fresh(an.get());
        da = r.first->data();
        fa = r.second;
      }
      if (bn->requires_grad) {
        auto r = grads.accum_fresh(bn.get());
        db = r.first->data();
        fb = r.second;
      }
      for (int64_t i = 0; i < batch; ++i) {
        detail::ECMap G(g.data() + i * m * n, m, n);
        if (da) {
          detail::ECMap B(bn->value->data() + i * n * k, n, k);
          detail::EMap D(da + i * m * k, m, k);
          if (fa)
            D.noalias() = G * B;
          else
            D.noalias() += G * B;
        }
        if (db) {
          detail::ECMap A(an->value->data() + i * m * k, m, k);
          detail::EMap D(db + i * n * k, n, k);
          if (fb)
            D.noalias() = G.transpose() * A;
          else
            D.noalias() += G.transpose() * A;
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax over one axis, max-subtracted for stability. Non-finite inputs are
// rejected with the flattened index of the first offender.
// ---------------------------------------------------------------------------
inline Tensor softmax(const Tensor& a, int axis) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("softmax: bad axis");
  const double* ap = a.data();
  for (int64_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(ap[i]))
      throw std::domain_error("softmax: non-finite input at flat index " + std::to_string(i));
  int64_t outer = 1, inner = 1;
  const int64_t d = a.shape()[axis];
  for (int i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= a.shape()[i];

  Tensor out = make_result(a.shape(), a.requires_grad());
  double* op = out.data();
  for (int64_t i = 0; i < outer; ++i)
    for (int64_t k = 0; k < inner; ++k) {
      const int64_t base = i * d * inner + k;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < d; ++j) mx = std::max(mx, ap[base + j * inner]);
      double z = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        const double e = std::exp(ap[base + j * inner] - mx);
        op[base + j * inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (int64_t j = 0; j < d; ++j) op[base + j * inner] *= inv;
    }
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    auto ov = out.node()->value;
    out.node()->backward = [an, ov, outer, inner, d](const std::vector<double>& g, GradMap& m) {
      std::vector<double>& da = m.accum(an.get());
      const double* yp = ov->data();
      for (int64_t i = 0; i < outer; ++i)
        for (int64_t k = 0; k < inner; ++k) {
          const int64_t base = i * d * inner + k;
          double dot = 0.0;
          for (int64_t j = 0; j < d; ++j) dot += g[base + j * inner] * yp[base + j * inner];
          for (int64_t j = 0; j < d; ++j) {
            const int64_t ix = base + j * inner;
            da[ix] += yp[ix] * (g[ix] - dot);
          }
        }
    };
  }
  return out;
}

// log softmax over the last axis (contrastive loss path).
inline Tensor log_softmax(const Tensor& a, int axis) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("log_softmax: bad axis");
  const double* ap = a.data();
  for (int64_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(ap[i]))
      throw std::domain_error("log_softmax: non-finite input at flat index " + std::to_string(i));
  int64_t outer = 1, inner = 1;
  const int64_t d = a.shape()[axis];
  for (int i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= a.shape()[i];

  Tensor out = make_result(a.shape(), a.requires_grad());
  double* op = out.data();
  for (int64_t i = 0; i < outer; ++i)
    for (int64_t k = 0; k < inner; ++k) {
      const int64_t base = i * d * inner + k;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < d; ++j) mx = std::max(mx, ap[base + j * inner]);
      double z = 0.0;
      for (int64_t j = 0; j < d; ++j) z += std::exp(ap[base + j * inner] - mx);
      const double lse = mx + std::log(z);
      for (int64_t j = 0; j < d; ++j) op[base + j * inner] = ap[base + j * inner] - lse;
    }
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    auto ov = out.node()->value;
    out.node()->backward = [an, ov, outer, inner, d](const std::vector<double>& g, GradMap& m) {
      std::vector<double>& da = m.accum(an.get());
      const double* yp = ov->data();
      for (int64_t i = 0; i < outer; ++i)
        for (int64_t k = 0; k < inner; ++k) {
          const int64_t base = i * d * inner + k;
          double gsum = 0.0;
          for (int64_t j = 0; j < d; ++j) gsum += g[base + j * inner];
          for (int64_t j = 0; j < d; ++j) {
            const int64_t ix = base + j * inner;
            da[ix] += g[ix] - std::exp(yp[ix]) * gsum;
          }
        }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer normalization over the last axis with learnable gain/bias.
// y = (x - mean) / sqrt(var + eps) * gain + bias, var is the biased estimate.
// ---------------------------------------------------------------------------
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const int r = x.rank();
  const int64_t d = x.dim(r - 1);
  if (gain.size() != d || bias.size() != d)
    throw std::invalid_argument("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  const int64_t rows = x.size() / d;
  Tensor out = make_result(x.shape(), x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  const double* xp = x.data();
  const double* gp = gain.data();
  const double* bp = bias.data();
  double* op = out.data();
  // Cache per-row mean and inverse stddev for backward.
  auto stats = std::make_shared<std::vector<double>>(rows * 2);
  for (int64_t i = 0; i < rows; ++i) {
    const double* row = xp + i * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * i] = mean;
    (*stats)[2 * i + 1] = inv;
    double* orow = op + i * d;
    for (int64_t j = 0; j < d; ++j) orow[j] = (row[j] - mean) * inv * gp[j] + bp[j];
  }
  if (out.requires_grad()) {
    attach_parents(out, {x, gain, bias});
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    out.node()->backward = [xn, gn, bn, stats, rows, d](const std::vector<double>& g, GradMap& m) {
      const double* xp = xn->value->data();
      const double* gp = gn->value->data();
      std::vector<double>* dx = xn->requires_grad ? &m.accum(xn.get()) : nullptr;
      std::vector<double>* dg = gn->requires_grad ? &m.accum(gn.get()) : nullptr;
      std::vector<double>* db = bn->requires_grad ? &m.accum(bn.get()) : nullptr;
      for (int64_t i = 0; i < rows; ++i) {
        const double mean = (*stats)[2 * i];
        const double inv = (*stats)[2 * i + 1];
        const double* xrow = xp + i * d;
        const double* grow = g.data() + i * d;
        if (dg || db) {
          for (int64_t j = 0; j < d; ++j) {
            const double xhat = (xrow[j] - mean) * inv;
            if (dg) (*dg)[j] += grow[j] * xhat;
            if (db) (*db)[j] += grow[j];
          }
        }
        if (dx) {
          // dL/dx = inv/d * (d*gy - sum(gy) - xhat*sum(gy*xhat)), gy = g*gain
          double s1 = 0.0, s2 = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            const double gy = grow[j] * gp[j];
            const double xhat = (xrow[j] - mean) * inv;
            s1 += gy;
            s2 += gy * xhat;
          }
          double* dxrow = dx->data() + i * d;
          const double dd = static_cast<double>(d);
          for (int64_t j = 0; j < d; ++j) {
            const double gy = grow[j] * gp[j];
            const double xhat = (xrow[j] - mean) * inv;
            dxrow[j] += inv * (gy - (s1 + xhat * s2) / dd);
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared attention kernel. Q [**,n,d], K/V [**,m,d].
//   A[j,k] = (Q_j . K_k) / (scale * key_divisors[k]);  A += mask;
//   out    = softmax(A, rows) V
// key_divisors broadcasts over A's last axis (per-key positive divisors, the
// uncertainty-weighted variant); mask is additive (-1e9 bans). Either extra
// may be an empty Tensor.
// ---------------------------------------------------------------------------
namespace detail {

inline Tensor attention_scores(const Tensor& q, const Tensor& k, double scale, const Tensor& key_divisors,
                               const Tensor& mask) {
  if (scale <= 0.0) throw std::invalid_argument("scaled_dot_attention: scale must be positive");
  if (key_divisors.defined()) {
    const double* dp = key_divisors.data();
    for (int64_t i = 0; i < key_divisors.size(); ++i)
      if (!(dp[i] > 0.0))
        throw std::invalid_argument("scaled_dot_attention: non-positive key divisor at index " + std::to_string(i));
  }
  Tensor scores = smul(bmm_nt(q, k), 1.0 / scale);
  if (key_divisors.defined()) scores = div(scores, key_divisors);
  if (mask.defined()) scores = add(scores, mask);
  return scores;
}

}  // namespace detail

inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale,
                                   const Tensor& key_divisors = Tensor(), const Tensor& mask = Tensor()) {
  return bmm(softmax(detail::attention_scores(q, k, scale, key_divisors, mask), -1), v);
}

// Attention weights alone (used by the uncertainty export path).
inline Tensor attention_weights(const Tensor& q, const Tensor& k, double scale,
                                const Tensor& key_divisors = Tensor(), const Tensor& mask = Tensor()) {
  return softmax(detail::attention_scores(q, k, scale, key_divisors, mask), -1);
}

// ---------------------------------------------------------------------------
// Affine map y = x W + b applied to the last axis; x [**,in], W [in,out].
// ---------------------------------------------------------------------------
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t in = w.dim(0), out_d = w.dim(1);
  if (x.dim(-1) != in)
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (b.defined() && b.size() != out_d)
    throw std::invalid_argument("linear: bias " + shape_str(b.shape()) + " vs weight " + shape_str(w.shape()));
  Shape oshape = x.shape();
  oshape.back() = out_d;
  const int64_t rows = x.size() / in;
  // Fused affine node: one GEMM plus a rowwise bias keeps the hot path to a
  // single pass instead of reshape/matmul/broadcast-add chains.
  Tensor out = make_result(std::move(oshape), x.requires_grad() || w.requires_grad() ||
                                                  (b.defined() && b.requires_grad()));
  detail::ECMap X(x.data(), rows, in);
  detail::ECMap W(w.data(), in, out_d);
  detail::EMap Y(out.data(), rows, out_d);
  Y.noalias() = X * W;
  if (b.defined()) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), out_d);
  if (out.requires_grad()) {
    if (b.defined())
      attach_parents(out, {x, w, b});
    else
      attach_parents(out, {x, w});
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    out.node()->backward = [xn, wn, bn, rows, in, out_d](const std::vector<double>& g, GradMap& grads) {
      detail::ECMap G(g.data(), rows, out_d);
      if (xn->requires_grad) {
        detail::ECMap W(wn->value->data(), in, out_d);
        auto [dx, fresh] = grads.accum_fresh(xn.get());
        detail::EMap D(dx->data(), rows, in);
        if (fresh)
          D.noalias() = G * W.transpose();
        else
          D.noalias() += G * W.transpose();
      }
      if (wn->requires_grad) {
        detail::ECMap X(xn->value->data(), rows, in);
        auto [dw, fresh] = grads.accum_fresh(wn.get());
        detail::EMap D(dw->data(), in, out_d);
        if (fresh)
          D.noalias() = X.transpose() * G;
        else
          D.noalias() += X.transpose() * G;
      }
      if (bn && bn->requires_grad)
        Eigen::Map<Eigen::RowVectorXd>(grads.accum(bn.get()).data(), out_d) += G.colwise().sum();
    };
  }
  return out;
}

inline Tensor linear(const Tensor& x, const Tensor& w) { return linear(x, w, Tensor{}); }

// L2 normalization of each row of a 2-D matrix; eps keeps sqrt smooth at 0.
inline Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12) {
  Tensor sq = sum_axis(mul(x, x), -1, /*keepdim=*/true);
  Tensor inv = div(Tensor::full({1}, 1.0), sqrt_t(sadd(sq, eps)));
  return mul(x, inv);
}

}  // namespace imupose
