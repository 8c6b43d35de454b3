#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "imupose/ops.hpp"
#include "imupose/params.hpp"
#include "imupose/tensor.hpp"

namespace imupose {

// Sinusoidal positional encoding rows: P[i, 2k] = sin(pos_i / 10000^(2k/d)),
// P[i, 2k+1] = cos(same). Constant (non-learnable); ||P_i||^2 == d/2.
inline Tensor sinusoidal_encoding(const std::vector<int64_t>& positions, int64_t dim) {
  const int64_t n = static_cast<int64_t>(positions.size());
  std::vector<double> v(n * dim);
  for (int64_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(positions[i]);
    for (int64_t k = 0; 2 * k < dim; ++k) {
      const double rate = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
      v[i * dim + 2 * k] = std::sin(pos * rate);
      if (2 * k + 1 < dim) v[i * dim + 2 * k + 1] = std::cos(pos * rate);
    }
  }
  return Tensor::from({n, dim}, std::move(v), false);
}

// ---------------------------------------------------------------------------
// Multi-head attention and pre-norm transformer blocks, parameterized through
// a ParamStore path prefix. register_* creates the tensors; the forward
// functions only read them, so construction fixes the parameter order.
// ---------------------------------------------------------------------------

// The key projection carries no bias: a constant added to every key shifts
// each score row uniformly, which softmax cancels, so such a bias would be
// unidentifiable (zero gradient) and break finite-difference verification.
inline void register_attention(ParamStore& ps, const std::string& p, int64_t dim, Rng& rng,
                               bool zero_out_proj = false) {
  ps.weight(p + ".wq", dim, dim, rng);
  ps.zeros(p + ".bq", {dim});
  ps.weight(p + ".wk", dim, dim, rng);
  ps.weight(p + ".wv", dim, dim, rng);
  ps.zeros(p + ".bv", {dim});
  if (zero_out_proj)
    ps.zeros(p + ".wo", {dim, dim});
  else
    ps.weight(p + ".wo", dim, dim, rng);
  ps.zeros(p + ".bo", {dim});
}

inline void register_transformer_block(ParamStore& ps, const std::string& p, int64_t dim, Rng& rng,
                                       bool zero_out_proj = false, bool cross = false) {
  ps.ones(p + ".ln1.gain", {dim});
  ps.zeros(p + ".ln1.bias", {dim});
  if (cross) {
    ps.ones(p + ".lnkv.gain", {dim});
    ps.zeros(p + ".lnkv.bias", {dim});
  }
  register_attention(ps, p + ".attn", dim, rng, zero_out_proj);
  ps.ones(p + ".ln2.gain", {dim});
  ps.zeros(p + ".ln2.bias", {dim});
  ps.weight(p + ".ff.w1", dim, 4 * dim, rng);
  ps.zeros(p + ".ff.b1", {4 * dim});
  // zero_out_proj zeroes both residual write-backs (attention out-projection
  // and the second feed-forward map), so the block is the identity at init.
  if (zero_out_proj)
    ps.zeros(p + ".ff.w2", {4 * dim, dim});
  else
    ps.weight(p + ".ff.w2", 4 * dim, dim, rng);
  ps.zeros(p + ".ff.b2", {dim});
}

namespace detail {

// Split [B, N, d] into heads: -> [B, h, N, d/h].
inline Tensor split_heads(const Tensor& x, int64_t heads) {
  const int64_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  return permute(reshape(x, {b, n, heads, d / heads}), {0, 2, 1, 3});
}

inline Tensor merge_heads(const Tensor& x) {
  const int64_t b = x.dim(0), h = x.dim(1), n = x.dim(2), dh = x.dim(3);
  return reshape(permute(x, {0, 2, 1, 3}), {b, n, h * dh});
}

}  // namespace detail

// x_q: [B, Nq, d], x_kv: [B, Nk, d]; optional additive mask broadcastable to
// [B, heads, Nq, Nk]. Scores are divided by sqrt(d/heads).
inline Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv, const ParamStore& ps, const std::string& p,
                                   int64_t heads, const Tensor& mask = {}) {
  const int64_t d = x_q.dim(-1);
  if (d % heads != 0) throw std::invalid_argument("multi_head_attention: dim not divisible by heads");
  Tensor q = detail::split_heads(linear(x_q, ps.get(p + ".wq"), ps.get(p + ".bq")), heads);
  Tensor k = detail::split_heads(linear(x_kv, ps.get(p + ".wk")), heads);
  Tensor v = detail::split_heads(linear(x_kv, ps.get(p + ".wv"), ps.get(p + ".bv")), heads);
  Tensor ctx = scaled_dot_attention(q, k, v, std::sqrt(static_cast<double>(d / heads)), {}, mask);
  return linear(detail::merge_heads(ctx), ps.get(p + ".wo"), ps.get(p + ".bo"));
}

// Pre-norm self-attention block: x + attn(LN(x)); then h + FF(LN(h)).
inline Tensor transformer_block(const Tensor& x, const ParamStore& ps, const std::string& p, int64_t heads,
                                const Tensor& mask = {}) {
  Tensor normed = layer_norm(x, ps.get(p + ".ln1.gain"), ps.get(p + ".ln1.bias"));
  Tensor h = add(x, multi_head_attention(normed, normed, ps, p + ".attn", heads, mask));
  Tensor ff_in = layer_norm(h, ps.get(p + ".ln2.gain"), ps.get(p + ".ln2.bias"));
  Tensor ff = linear(gelu(linear(ff_in, ps.get(p + ".ff.w1"), ps.get(p + ".ff.b1"))), ps.get(p + ".ff.w2"),
                     ps.get(p + ".ff.b2"));
  return add(h, ff);
}

// Pre-norm cross-attention block: queries from x, keys/values from kv.
inline Tensor transformer_cross_block(const Tensor& x, const Tensor& kv, const ParamStore& ps, const std::string& p,
                                      int64_t heads, const Tensor& mask = {}) {
  Tensor q_in = layer_norm(x, ps.get(p + ".ln1.gain"), ps.get(p + ".ln1.bias"));
  Tensor kv_in = layer_norm(kv, ps.get(p + ".lnkv.gain"), ps.get(p + ".lnkv.bias"));
  Tensor h = add(x, multi_head_attention(q_in, kv_in, ps, p + ".attn", heads, mask));
  Tensor ff_in = layer_norm(h, ps.get(p + ".ln2.gain"), ps.get(p + ".ln2.bias"));
  Tensor ff = linear(gelu(linear(ff_in, ps.get(p + ".ff.w1"), ps.get(p + ".ff.b1"))), ps.get(p + ".ff.w2"),
                     ps.get(p + ".ff.b2"));
  return add(h, ff);
}

}  // namespace imupose
