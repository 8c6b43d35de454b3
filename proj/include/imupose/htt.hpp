#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "imupose/transformer.hpp"

namespace imupose {

// Hierarchical temporal transformer over per-frame spatial features: windowed
// and shifted-window attention blocks, token merging between stages, and a
// final restoration back to one token per frame plus a pooled [CLS] token.
struct HttConfig {
  int64_t frames = 80;    // sequence length T
  int64_t window = 20;    // attention window I
  int64_t shift = 10;     // cyclic shift s for the shifted blocks
  int64_t stages = 3;     // merges happen after every stage but the last
  int64_t base_dim = 192; // token width at stage 0; doubles per merge
  int64_t heads = 4;
};

inline void validate(const HttConfig& cfg) {
  if (cfg.frames <= 0 || cfg.window <= 0 || cfg.stages <= 0 || cfg.base_dim <= 0 || cfg.heads <= 0)
    throw std::invalid_argument("HttConfig: sizes must be positive");
  if (cfg.shift <= 0 || cfg.shift >= cfg.window)
    throw std::invalid_argument("HttConfig: shift must lie strictly between 0 and the window size");
  if (cfg.base_dim % cfg.heads != 0) throw std::invalid_argument("HttConfig: heads must divide base_dim");
  int64_t len = cfg.frames;
  for (int64_t k = 0; k < cfg.stages; ++k) {
    if (len % cfg.window != 0)
      throw std::invalid_argument("HttConfig: window must divide the sequence length at every stage");
    if (k + 1 < cfg.stages) {
      if (len % 2 != 0) throw std::invalid_argument("HttConfig: stage length must be even to merge");
      len /= 2;
    }
  }
}

// Additive attention mask for shifted-window batching, shape [L/I, I, I].
//
// The shifted partition splits the ORIGINAL sequence into irregular segments
// [0,s), [s,s+I), ..., [L-I+s, L). A leftward cyclic shift by s realigns all
// full segments with the batched windows; only the final batched window mixes
// two segments (the tail [L-I+s, L) wrapped together with the head [0, s)).
// Entries are 0 where query and key come from the same segment, else -1e9.
inline Tensor build_shift_mask(int64_t length, int64_t window, int64_t shift) {
  if (window <= 0 || length <= 0 || length % window != 0)
    throw std::invalid_argument("build_shift_mask: window must divide length");
  if (shift < 0 || shift >= window)
    throw std::invalid_argument("build_shift_mask: shift must lie in [0, window)");
  const int64_t nwin = length / window;
  // Segment id of each original position under the shifted partition.
  auto tag = [&](int64_t p) { return p < shift ? int64_t{0} : 1 + (p - shift) / window; };
  std::vector<double> m(nwin * window * window, 0.0);
  for (int64_t w = 0; w < nwin; ++w)
    for (int64_t q = 0; q < window; ++q)
      for (int64_t k = 0; k < window; ++k) {
        const int64_t tq = tag((w * window + q + shift) % length);
        const int64_t tk = tag((w * window + k + shift) % length);
        if (tq != tk) m[(w * window + q) * window + k] = -1e9;
      }
  return Tensor::from({nwin, window, window}, std::move(m), false);
}

// One pre-norm transformer block whose attention is confined to windows of
// size `window`. When `shifted`, the sequence is cyclically shifted left by
// `shift` first (and back afterwards) and the wrap window is masked so tokens
// only attend within their segment of the shifted partition. Input [L, d].
inline Tensor window_attention(const Tensor& x, int64_t window, bool shifted, const ParamStore& ps,
                               const std::string& prefix, int64_t heads, int64_t shift) {
  if (x.rank() != 2) throw std::invalid_argument("window_attention: expected a [length, dim] input");
  const int64_t len = x.dim(0), d = x.dim(1);
  if (window <= 0 || len % window != 0) throw std::invalid_argument("window_attention: window must divide length");
  const int64_t nwin = len / window;
  Tensor y = shifted ? roll(x, -shift, 0) : x;
  Tensor mask;
  if (shifted) mask = reshape(build_shift_mask(len, window, shift), {nwin, 1, window, window});
  Tensor out = reshape(transformer_block(reshape(y, {nwin, window, d}), ps, prefix, heads, mask), {len, d});
  return shifted ? roll(out, shift, 0) : out;
}

// Merge adjacent token pairs: [L, d] -> concat pairs [L/2, 2d] -> LN -> affine.
inline Tensor patch_merge(const Tensor& x, const ParamStore& ps, const std::string& prefix) {
  if (x.rank() != 2) throw std::invalid_argument("patch_merge: expected a [length, dim] input");
  const int64_t len = x.dim(0), d = x.dim(1);
  if (len % 2 != 0) throw std::invalid_argument("patch_merge: length must be even");
  Tensor pairs = reshape(x, {len / 2, 2 * d});
  Tensor normed = layer_norm(pairs, ps.get(prefix + ".ln.gain"), ps.get(prefix + ".ln.bias"));
  return linear(normed, ps.get(prefix + ".w"), ps.get(prefix + ".b"));
}

inline void register_htt(ParamStore& ps, Rng& rng, const HttConfig& cfg = {}) {
  validate(cfg);
  int64_t d = cfg.base_dim;
  for (int64_t k = 0; k < cfg.stages; ++k) {
    const std::string stage = "htt.stage" + std::to_string(k);
    register_transformer_block(ps, stage + ".wsa", d, rng);
    register_transformer_block(ps, stage + ".swsa", d, rng);
    if (k + 1 < cfg.stages) {
      const std::string merge = "htt.merge" + std::to_string(k);
      ps.ones(merge + ".ln.gain", {2 * d});
      ps.zeros(merge + ".ln.bias", {2 * d});
      ps.weight(merge + ".w", 2 * d, 2 * d, rng);
      ps.zeros(merge + ".b", {2 * d});
      d *= 2;
    }
  }
  // Restoration back to one token per frame: 768 -> 768 then reshape so each
  // coarse token supplies base_dim-wide slices for its merged frames.
  ps.weight("htt.restore.w", d, d, rng);
  ps.zeros("htt.restore.b", {d});
  ps.weight("htt.cls.w", cfg.base_dim, cfg.base_dim, rng);
  ps.zeros("htt.cls.b", {cfg.base_dim});
}

// Full hierarchy: sinusoidal frame positions, then per stage a W-SA block
// followed by an SW-SA block, merging tokens between stages. The coarse
// output is projected and reshaped back to frames x base_dim, and a pooled
// [CLS] token is prepended: output is [T+1, base_dim], row 0 = [CLS].
inline Tensor htt_forward(const Tensor& o, const HttConfig& cfg, const ParamStore& ps) {
  validate(cfg);
  if (o.rank() != 2 || o.dim(0) != cfg.frames || o.dim(1) != cfg.base_dim)
    throw std::invalid_argument("htt_forward: expected input of shape [frames, base_dim]");
  std::vector<int64_t> positions(cfg.frames);
  std::iota(positions.begin(), positions.end(), 0);
  Tensor h = add(o, sinusoidal_encoding(positions, cfg.base_dim));
  for (int64_t k = 0; k < cfg.stages; ++k) {
    const std::string stage = "htt.stage" + std::to_string(k);
    h = window_attention(h, cfg.window, false, ps, stage + ".wsa", cfg.heads, cfg.shift);
    h = window_attention(h, cfg.window, true, ps, stage + ".swsa", cfg.heads, cfg.shift);
    if (k + 1 < cfg.stages) h = patch_merge(h, ps, "htt.merge" + std::to_string(k));
  }
  Tensor f = reshape(linear(h, ps.get("htt.restore.w"), ps.get("htt.restore.b")), {cfg.frames, cfg.base_dim});
  Tensor cls = linear(mean_axis(f, 0, true), ps.get("htt.cls.w"), ps.get("htt.cls.b"));
  return concat({cls, f}, 0);
}

}  // namespace imupose
