#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "imupose/kinematics.hpp"
#include "imupose/transformer.hpp"

namespace imupose {

inline constexpr int64_t kFuseDim = 192;
inline constexpr int64_t kFuseHeads = 4;
inline constexpr int64_t kFuseLayers = 2;
inline constexpr int64_t kContrastiveDim = 64;
inline constexpr double kTauInit = 0.07;
inline constexpr int64_t kPoseQDim = kNumJoints * 6;  // 90
inline constexpr int64_t kPosePDim = kNumJoints * 3;  // 45
inline constexpr int64_t kPoseSDim = 3;
inline constexpr int64_t kPoseDim = kPoseQDim + kPosePDim + kPoseSDim;  // 138

// Regressed motion: per-frame joint rotations (6D), joint positions (meters),
// and root velocity (m/s).
struct PoseOutput {
  Tensor q;  // [T, 15, 6]
  Tensor p;  // [T, 15, 3]
  Tensor s;  // [T, 3]
};

struct LossWeights {
  double delta = 0.1;   // uncertainty loss
  double gamma = 0.01;  // contrastive loss
  double lambda = 1.0;  // rotation reconstruction
  double beta = 10.0;   // position reconstruction
  double alpha = 1.0;   // root-velocity reconstruction
};

// The three training objectives plus their sum; kept as graph nodes so the
// total can be backpropagated while components are logged.
struct LossBreakdown {
  Tensor l_sigma;
  Tensor l_contrastive;
  Tensor l_recon;
  Tensor total;
};

// Per-frame pose regression head. Registered separately from the fusion
// stack because the sensor-only variant regresses straight from temporal
// tokens without any fusion parameters.
inline void register_pose_head(ParamStore& ps, Rng& rng) {
  ps.weight("head.w", kFuseDim, kPoseDim, rng);
  ps.zeros("head.b", {kPoseDim});
}

inline void register_fusion(ParamStore& ps, Rng& rng) {
  ps.weight("fusion.cproj_sensor.w", kFuseDim, kContrastiveDim, rng);
  ps.zeros("fusion.cproj_sensor.b", {kContrastiveDim});
  ps.weight("fusion.cproj_text.w", kFuseDim, kContrastiveDim, rng);
  ps.zeros("fusion.cproj_text.b", {kContrastiveDim});
  // Learnable temperature stored as log(tau) so tau = exp stays positive.
  ps.scalar("fusion.log_tau", std::log(kTauInit));
  ps.zeros("fusion.groups", {2, kFuseDim});  // row 0 = sensor modality, row 1 = text
  // Zeroed residual write-backs make fusion the identity map at init, so an
  // untrained fusion stack passes sensor features through unchanged.
  for (int64_t l = 0; l < kFuseLayers; ++l)
    register_transformer_block(ps, "fusion.block" + std::to_string(l), kFuseDim, rng,
                               /*zero_out_proj=*/true, /*cross=*/true);
}

inline Tensor temperature(const ParamStore& ps) { return exp_t(ps.get("fusion.log_tau")); }

// Batch-alignment objective applied to a precomputed similarity matrix:
// loss = -gamma/(2B) * sum_i (H1_i + H2_i), H1 = diagonal of the row-wise
// log-softmax of sim/tau, H2 = the same column-wise.
inline Tensor contrastive_from_similarity(const Tensor& sim, const Tensor& tau, double gamma) {
  if (sim.rank() != 2 || sim.dim(0) != sim.dim(1))
    throw std::invalid_argument("contrastive_from_similarity: similarity must be square");
  if (tau.size() != 1 || !(tau.values()[0] > 0.0))
    throw std::invalid_argument("contrastive_from_similarity: temperature must be positive");
  const int64_t b = sim.dim(0);
  Tensor logits = div(sim, tau);
  Tensor h1 = take_diag(log_softmax(logits, 1));
  Tensor h2 = take_diag(log_softmax(logits, 0));
  return smul(add(sum_all(h1), sum_all(h2)), -gamma / (2.0 * static_cast<double>(b)));
}

// Project both CLS batches 192 -> 64, L2-normalize, and score cosine
// similarity of every sensor/text pair.
inline Tensor contrastive_loss(const Tensor& f_cls, const Tensor& w_cls, const Tensor& tau, const ParamStore& ps,
                               double gamma) {
  if (f_cls.rank() != 2 || w_cls.rank() != 2 || f_cls.dim(0) != w_cls.dim(0) || f_cls.dim(1) != kFuseDim ||
      w_cls.dim(1) != kFuseDim)
    throw std::invalid_argument("contrastive_loss: expected matching [batch, 192] anchors");
  const int64_t b = f_cls.dim(0);
  Tensor zs = l2_normalize_rows(linear(f_cls, ps.get("fusion.cproj_sensor.w"), ps.get("fusion.cproj_sensor.b")));
  Tensor zt = l2_normalize_rows(linear(w_cls, ps.get("fusion.cproj_text.w"), ps.get("fusion.cproj_text.b")));
  Tensor sim = reshape(bmm_nt(reshape(zs, {1, b, kContrastiveDim}), reshape(zt, {1, b, kContrastiveDim})), {b, b});
  return contrastive_from_similarity(sim, tau, gamma);
}

// Fuse sensor tokens (queries) with text tokens (keys/values) through two
// pre-norm cross-attention blocks. Modality group embeddings and temporal
// positions are added to the normalized attention inputs only, so they steer
// attention without riding the residual stream: with zero-initialized output
// projections the fused output equals the sensor input bitwise.
//
// f: [T+1, 192] sensor tokens (row 0 = CLS); w: [N+1, 192] text tokens (row 0
// = CLS); text_positions: the Eq. 1 temporal index of each non-CLS text token.
inline Tensor cross_attention_fuse(const Tensor& f, const Tensor& w, const std::vector<int64_t>& text_positions,
                                   const ParamStore& ps) {
  if (f.rank() != 2 || f.dim(1) != kFuseDim || w.rank() != 2 || w.dim(1) != kFuseDim)
    throw std::invalid_argument("cross_attention_fuse: expected [tokens, 192] inputs");
  const int64_t t = f.dim(0) - 1;
  const int64_t n = w.dim(0) - 1;
  if (static_cast<int64_t>(text_positions.size()) != n)
    throw std::invalid_argument("cross_attention_fuse: one position per non-CLS text token");

  Tensor cls_pad = Tensor::zeros({1, kFuseDim}, false);  // CLS rows carry no position
  std::vector<int64_t> fpos(t);
  std::iota(fpos.begin(), fpos.end(), 0);
  Tensor s_add = add(concat({cls_pad, sinusoidal_encoding(fpos, kFuseDim)}, 0), slice(ps.get("fusion.groups"), 0, 0, 1));
  Tensor t_pos = n > 0 ? concat({cls_pad, sinusoidal_encoding(text_positions, kFuseDim)}, 0) : cls_pad;
  Tensor t_add = add(t_pos, slice(ps.get("fusion.groups"), 0, 1, 1));

  Tensor x = f;
  for (int64_t l = 0; l < kFuseLayers; ++l) {
    const std::string p = "fusion.block" + std::to_string(l);
    Tensor q_in = add(layer_norm(x, ps.get(p + ".ln1.gain"), ps.get(p + ".ln1.bias")), s_add);
    Tensor kv_in = add(layer_norm(w, ps.get(p + ".lnkv.gain"), ps.get(p + ".lnkv.bias")), t_add);
    Tensor att = multi_head_attention(reshape(q_in, {1, t + 1, kFuseDim}), reshape(kv_in, {1, n + 1, kFuseDim}), ps,
                                      p + ".attn", kFuseHeads);
    Tensor h = add(x, reshape(att, {t + 1, kFuseDim}));
    Tensor ff_in = layer_norm(h, ps.get(p + ".ln2.gain"), ps.get(p + ".ln2.bias"));
    Tensor ff = linear(gelu(linear(ff_in, ps.get(p + ".ff.w1"), ps.get(p + ".ff.b1"))), ps.get(p + ".ff.w2"),
                       ps.get(p + ".ff.b2"));
    x = add(h, ff);
  }
  return x;
}

// Drop the CLS row and regress each frame token to 90 + 45 + 3 pose numbers.
inline PoseOutput regress_pose(const Tensor& fused, const ParamStore& ps) {
  if (fused.rank() != 2 || fused.dim(1) != kFuseDim || fused.dim(0) < 2)
    throw std::invalid_argument("regress_pose: expected [T+1, 192] fused tokens");
  const int64_t t = fused.dim(0) - 1;
  Tensor out = linear(slice(fused, 0, 1, t), ps.get("head.w"), ps.get("head.b"));
  PoseOutput pose;
  pose.q = reshape(slice(out, 1, 0, kPoseQDim), {t, kNumJoints, 6});
  pose.p = reshape(slice(out, 1, kPoseQDim, kPosePDim), {t, kNumJoints, 3});
  pose.s = slice(out, 1, kPoseQDim + kPosePDim, kPoseSDim);
  return pose;
}

// Eq. 3: residuals scaled by the per-frame all-sensor uncertainty sum, plus
// the squared-sigma regularizer, averaged over frames and weighted by delta.
inline Tensor uncertainty_loss(const Tensor& q, const Tensor& q_hat, const Tensor& p, const Tensor& p_hat,
                               const Tensor& sigma, double delta) {
  if (q.shape() != q_hat.shape() || p.shape() != p_hat.shape())
    throw std::invalid_argument("uncertainty_loss: prediction/target shape mismatch");
  if (sigma.rank() != 3 || q.dim(0) != sigma.dim(0) || p.dim(0) != sigma.dim(0))
    throw std::invalid_argument("uncertainty_loss: sigma must be [T, sensors, channels]");
  const int64_t t = sigma.dim(0);
  Tensor denom = sum_axis(sum_axis(sigma, 2, false), 1, false);  // [T] scalar sums
  for (int64_t i = 0; i < t; ++i)
    if (!(denom.values()[i] > 0.0)) throw std::domain_error("uncertainty_loss: sigma sum must be positive");
  Tensor d2 = mul(denom, denom);
  Tensor rq = sub(q, q_hat);
  Tensor rp = sub(p, p_hat);
  Tensor q_term = div(sum_axis(reshape(mul(rq, rq), {t, q.size() / t}), 1, false), d2);
  Tensor p_term = div(sum_axis(reshape(mul(rp, rp), {t, p.size() / t}), 1, false), d2);
  Tensor reg = sum_axis(reshape(mul(sigma, sigma), {t, sigma.size() / t}), 1, false);
  return smul(sum_all(add(add(q_term, p_term), reg)), delta / static_cast<double>(t));
}

// Eqs. 6-7: lambda*D(q) + beta*D(p) + alpha*D(s), D = per-frame mean of the
// squared L2 discrepancy.
inline Tensor recon_loss(const Tensor& q, const Tensor& q_hat, const Tensor& p, const Tensor& p_hat, const Tensor& s,
                         const Tensor& s_hat, double lambda, double beta, double alpha) {
  if (q.shape() != q_hat.shape() || p.shape() != p_hat.shape() || s.shape() != s_hat.shape())
    throw std::invalid_argument("recon_loss: prediction/target shape mismatch");
  const double t = static_cast<double>(q.dim(0));
  auto d = [&](const Tensor& a, const Tensor& b) { return smul(sum_squares(sub(a, b)), 1.0 / t); };
  return add(add(smul(d(q, q_hat), lambda), smul(d(p, p_hat), beta)), smul(d(s, s_hat), alpha));
}

}  // namespace imupose
