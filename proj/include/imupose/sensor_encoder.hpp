#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "imupose/kinematics.hpp"
#include "imupose/ops.hpp"
#include "imupose/params.hpp"
#include "imupose/rng.hpp"

namespace imupose {

inline constexpr int64_t kSensorChannels = 12;             // 3 accel + 9 rotation
inline constexpr int64_t kSensorFeatureDim = 32;           // c
inline constexpr int64_t kSpatialDim = kNumSensors * kSensorFeatureDim;  // 192
inline constexpr double kSigmaFloor = 1e-6;

enum class SampleMode { kTrain, kInfer };

// uncertainty regression head: 72 -> 128 -> 72, applied per frame. Registered
// separately because every model variant trains it, including the one that
// strips the spatial attention.
inline void register_uncertainty_head(ParamStore& ps, Rng& rng) {
  ps.weight("ugsa.sigma.w1", kNumSensors * kSensorChannels, 128, rng);
  ps.zeros("ugsa.sigma.b1", {128});
  ps.weight("ugsa.sigma.w2", 128, kNumSensors * kSensorChannels, rng);
  ps.zeros("ugsa.sigma.b2", {kNumSensors * kSensorChannels});
}

inline void register_sensor_encoder(ParamStore& ps, Rng& rng) {
  register_uncertainty_head(ps, rng);
  // six distinct per-sensor affine maps 12 -> c plus a per-sensor embedding
  for (int s = 0; s < kNumSensors; ++s) {
    ps.weight("ugsa.proj" + std::to_string(s) + ".w", kSensorChannels, kSensorFeatureDim, rng);
    ps.zeros("ugsa.proj" + std::to_string(s) + ".b", {kSensorFeatureDim});
  }
  ps.embedding("ugsa.sensor_embed", kNumSensors, kSensorFeatureDim, rng);
  // bias-free attention projections over the 6 sensor tokens
  ps.weight("ugsa.pq", kSensorFeatureDim, kSensorFeatureDim, rng);
  ps.weight("ugsa.pk", kSensorFeatureDim, kSensorFeatureDim, rng);
  ps.weight("ugsa.pv", kSensorFeatureDim, kSensorFeatureDim, rng);
  ps.ones("ugsa.ln.gain", {kSensorFeatureDim});
  ps.zeros("ugsa.ln.bias", {kSensorFeatureDim});
}

// sigma(X): T x 6 x 12, strictly positive (softplus + 1e-6 floor). The head
// reads the RAW readings X, not the resampled X-tilde.
inline Tensor estimate_uncertainty(const Tensor& x, const ParamStore& ps) {
  const int64_t t = x.dim(0);
  Tensor flat = reshape(x, {t, kNumSensors * kSensorChannels});
  Tensor h = gelu(linear(flat, ps.get("ugsa.sigma.w1"), ps.get("ugsa.sigma.b1")));
  Tensor raw = linear(h, ps.get("ugsa.sigma.w2"), ps.get("ugsa.sigma.b2"));
  return reshape(sadd(softplus(raw), kSigmaFloor), {t, kNumSensors, kSensorChannels});
}

// Reparameterized perturbation: train draws X + sigma * eps (differentiable
// through both X and sigma); inference passes the readings through untouched.
inline Tensor resample(const Tensor& x, const Tensor& sigma, SampleMode mode, Rng& rng) {
  if (mode == SampleMode::kInfer) return x;
  std::vector<double> noise(x.size());
  for (auto& v : noise) v = rng.normal();
  Tensor eps = Tensor::from(x.shape(), std::move(noise), false);
  return add(x, mul(sigma, eps));
}

namespace detail {

// Per-sensor tokens Z: T x 6 x c.
inline Tensor ugsa_tokens(const Tensor& x_tilde, const ParamStore& ps) {
  const int64_t t = x_tilde.dim(0);
  std::vector<Tensor> tokens;
  for (int s = 0; s < kNumSensors; ++s) {
    Tensor xs = reshape(slice(x_tilde, 1, s, 1), {t, kSensorChannels});
    Tensor z = linear(xs, ps.get("ugsa.proj" + std::to_string(s) + ".w"),
                      ps.get("ugsa.proj" + std::to_string(s) + ".b"));
    z = add(z, slice(ps.get("ugsa.sensor_embed"), 0, s, 1));  // broadcast [1,c]
    tokens.push_back(reshape(z, {t, 1, kSensorFeatureDim}));
  }
  return concat(tokens, 1);
}

// Channel-summed uncertainty per sensor, shaped [T,1,6] to divide score
// columns (key axis).
inline Tensor ugsa_divisors(const Tensor& sigma) {
  return reshape(sum_axis(sigma, 2, false), {sigma.dim(0), 1, kNumSensors});
}

}  // namespace detail

// Attention weights over sensors, softmax rows of
// A[t,j,k] = (Z_j P^Q)(Z_k P^K)^T / (sqrt(c) * sum_channels sigma[t,k]).
inline Tensor ugsa_attention_weights(const Tensor& x_tilde, const Tensor& sigma, const ParamStore& ps) {
  Tensor z = detail::ugsa_tokens(x_tilde, ps);
  Tensor q = linear(z, ps.get("ugsa.pq"));
  Tensor k = linear(z, ps.get("ugsa.pk"));
  return attention_weights(q, k, std::sqrt(static_cast<double>(kSensorFeatureDim)), detail::ugsa_divisors(sigma));
}

// Spatial features O: T x 192. Attention over the 6 sensor tokens with the
// uncertainty sums dividing score columns, then value mix + residual +
// layer_norm, flattened across sensors.
inline Tensor ugsa_forward(const Tensor& x_tilde, const Tensor& sigma, const ParamStore& ps) {
  const int64_t t = x_tilde.dim(0);
  Tensor z = detail::ugsa_tokens(x_tilde, ps);
  Tensor q = linear(z, ps.get("ugsa.pq"));
  Tensor k = linear(z, ps.get("ugsa.pk"));
  Tensor v = linear(z, ps.get("ugsa.pv"));
  Tensor mixed = scaled_dot_attention(q, k, v, std::sqrt(static_cast<double>(kSensorFeatureDim)),
                                      detail::ugsa_divisors(sigma));
  Tensor o = layer_norm(add(mixed, z), ps.get("ugsa.ln.gain"), ps.get("ugsa.ln.bias"));
  return reshape(o, {t, kSpatialDim});
}

}  // namespace imupose
