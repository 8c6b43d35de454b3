#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "imupose/dataset.hpp"
#include "imupose/fusion.hpp"
#include "imupose/htt.hpp"
#include "imupose/sensor_encoder.hpp"
#include "imupose/text_encoder.hpp"

namespace imupose {

// Ablation variants: the full pipeline, the text-free online model, the one
// without spatial attention, and the one with global instead of hierarchical
// temporal attention.
enum class Variant { kFull, kSensorOnly, kNoUgsa, kNoHtt };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kSensorOnly: return "sensor_only";
    case Variant::kNoUgsa: return "no_ugsa";
    case Variant::kNoHtt: return "no_htt";
  }
  return "full";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "sensor_only") return Variant::kSensorOnly;
  if (s == "no_ugsa") return Variant::kNoUgsa;
  if (s == "no_htt") return Variant::kNoHtt;
  throw std::invalid_argument("unknown variant '" + s + "' (expected full|sensor_only|no_ugsa|no_htt)");
}

inline bool uses_text(Variant v) { return v != Variant::kSensorOnly; }

inline constexpr int64_t kGlobalTemporalBlocks = 3;

struct ModelConfig {
  Variant variant = Variant::kFull;
  HttConfig htt;
  LossWeights weights;
};

struct Model {
  ModelConfig cfg;
  Vocabulary vocab;
  ParamStore params;
};

// Construct and initialize a model. Registration order is part of the model
// identity: it fixes optimizer iteration, checkpoint layout, and probe order.
inline Model make_model(const ModelConfig& cfg, const Vocabulary& vocab, uint64_t seed) {
  validate(cfg.htt);
  if (cfg.htt.base_dim != kSpatialDim)
    throw std::invalid_argument("make_model: temporal width must match the spatial feature width");
  Model m;
  m.cfg = cfg;
  m.vocab = vocab;
  Rng rng(seed);
  ParamStore& ps = m.params;

  if (cfg.variant == Variant::kNoUgsa) {
    register_uncertainty_head(ps, rng);
    // spatial attention replaced by six per-sensor affines, concatenated
    for (int s = 0; s < kNumSensors; ++s) {
      ps.weight("flat.proj" + std::to_string(s) + ".w", kSensorChannels, kSensorFeatureDim, rng);
      ps.zeros("flat.proj" + std::to_string(s) + ".b", {kSensorFeatureDim});
    }
  } else {
    register_sensor_encoder(ps, rng);
  }

  if (cfg.variant == Variant::kNoHtt) {
    // hierarchical stages replaced by global-attention blocks at base width
    for (int64_t l = 0; l < kGlobalTemporalBlocks; ++l)
      register_transformer_block(ps, "ghtt.block" + std::to_string(l), cfg.htt.base_dim, rng);
    ps.weight("ghtt.cls.w", cfg.htt.base_dim, cfg.htt.base_dim, rng);
    ps.zeros("ghtt.cls.b", {cfg.htt.base_dim});
  } else {
    register_htt(ps, rng, cfg.htt);
  }

  if (uses_text(cfg.variant)) {
    register_text_encoder(ps, vocab, rng);
    register_fusion(ps, rng);
  }
  register_pose_head(ps, rng);
  return m;
}

namespace detail {

// no_ugsa spatial path: per-sensor affine and flatten, no attention, no norm.
inline Tensor flat_spatial(const Tensor& x_tilde, const ParamStore& ps) {
  const int64_t t = x_tilde.dim(0);
  std::vector<Tensor> tokens;
  for (int s = 0; s < kNumSensors; ++s) {
    Tensor xs = reshape(slice(x_tilde, 1, s, 1), {t, kSensorChannels});
    tokens.push_back(
        linear(xs, ps.get("flat.proj" + std::to_string(s) + ".w"), ps.get("flat.proj" + std::to_string(s) + ".b")));
  }
  return concat(tokens, 1);
}

// no_htt temporal path: frame positions, global-attention blocks, pooled CLS.
// Mirrors the hierarchical forward's output contract [T+1, base_dim].
inline Tensor global_temporal(const Tensor& o, const HttConfig& cfg, const ParamStore& ps) {
  std::vector<int64_t> positions(cfg.frames);
  std::iota(positions.begin(), positions.end(), 0);
  Tensor h = reshape(add(o, sinusoidal_encoding(positions, cfg.base_dim)), {1, cfg.frames, cfg.base_dim});
  for (int64_t l = 0; l < kGlobalTemporalBlocks; ++l)
    h = transformer_block(h, ps, "ghtt.block" + std::to_string(l), cfg.heads);
  Tensor f = reshape(h, {cfg.frames, cfg.base_dim});
  Tensor cls = linear(mean_axis(f, 0, true), ps.get("ghtt.cls.w"), ps.get("ghtt.cls.b"));
  return concat({cls, f}, 0);
}

}  // namespace detail

struct ForwardResult {
  Tensor sigma;     // [T, 6, 12] estimated uncertainty
  Tensor features;  // [T+1, 192] temporal tokens, row 0 = CLS (pre-fusion)
  Tensor fused;     // [T+1, 192] after fusion; equals features without text
  Tensor text_cls;  // [1, 192] text CLS anchor when text participates
  PoseOutput pose;
};

// One window through the variant's pipeline. Training mode draws resampling
// noise from rng; inference passes readings through untouched.
inline ForwardResult model_forward(const Model& m, const Tensor& x, const std::vector<TextLabel>& labels, int64_t t0,
                                   SampleMode mode, Rng& rng) {
  const ModelConfig& cfg = m.cfg;
  const ParamStore& ps = m.params;
  if (x.rank() != 3 || x.dim(0) != cfg.htt.frames || x.dim(1) != kNumSensors || x.dim(2) != kSensorChannels)
    throw std::invalid_argument("model_forward: expected readings of shape [frames, 6, 12]");

  ForwardResult r;
  r.sigma = estimate_uncertainty(x, ps);
  Tensor x_tilde = resample(x, r.sigma, mode, rng);
  Tensor spatial =
      cfg.variant == Variant::kNoUgsa ? detail::flat_spatial(x_tilde, ps) : ugsa_forward(x_tilde, r.sigma, ps);
  r.features =
      cfg.variant == Variant::kNoHtt ? detail::global_temporal(spatial, cfg.htt, ps) : htt_forward(spatial, cfg.htt, ps);
  if (uses_text(cfg.variant)) {
    std::vector<TextLabel> selected = select_labels(labels, t0, cfg.htt.frames);
    Tensor w = encode_text(selected, t0, cfg.htt.frames, m.vocab, ps);
    r.text_cls = slice(w, 0, 0, 1);
    r.fused = cross_attention_fuse(r.features, w, text_position_indices(selected, t0, cfg.htt.frames), ps);
  } else {
    r.fused = r.features;
  }
  r.pose = regress_pose(r.fused, ps);
  return r;
}

// One training example: a window of readings, its labels, the window origin
// within the source sequence, and ground-truth targets.
struct TrainItem {
  Tensor x;  // [T, 6, 12]
  std::vector<TextLabel> labels;
  int64_t t0 = 0;
  Tensor q_gt;  // [T, 15, 6]
  Tensor p_gt;  // [T, 15, 3]
  Tensor s_gt;  // [T, 3]
};

// Eq. 8 over a batch: per-item uncertainty and reconstruction terms averaged,
// one batch-wise contrastive term over the pre-fusion CLS anchors.
inline LossBreakdown total_loss(const Model& m, const std::vector<TrainItem>& batch, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  const LossWeights& wts = m.cfg.weights;
  Tensor l_sigma, l_recon;
  std::vector<Tensor> f_cls_rows, w_cls_rows;
  for (const TrainItem& item : batch) {
    ForwardResult fr = model_forward(m, item.x, item.labels, item.t0, SampleMode::kTrain, rng);
    Tensor ls = uncertainty_loss(fr.pose.q, item.q_gt, fr.pose.p, item.p_gt, fr.sigma, wts.delta);
    Tensor lr = recon_loss(fr.pose.q, item.q_gt, fr.pose.p, item.p_gt, fr.pose.s, item.s_gt, wts.lambda, wts.beta,
                           wts.alpha);
    l_sigma = l_sigma.defined() ? add(l_sigma, ls) : ls;
    l_recon = l_recon.defined() ? add(l_recon, lr) : lr;
    if (uses_text(m.cfg.variant)) {
      f_cls_rows.push_back(slice(fr.features, 0, 0, 1));
      w_cls_rows.push_back(fr.text_cls);
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossBreakdown out;
  out.l_sigma = smul(l_sigma, inv_b);
  out.l_recon = smul(l_recon, inv_b);
  out.l_contrastive = uses_text(m.cfg.variant)
                          ? contrastive_loss(concat(f_cls_rows, 0), concat(w_cls_rows, 0), temperature(m.params),
                                             m.params, wts.gamma)
                          : Tensor::zeros({1}, false);
  out.total = add(add(out.l_sigma, out.l_contrastive), out.l_recon);
  return out;
}

}  // namespace imupose
