#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "imupose/model.hpp"

namespace imupose {

// ---------------------------------------------------------------------------
// Adam optimizer over a ParamStore. Moments are kept per parameter path so a
// state object can outlive the gradient maps that feed it.
// ---------------------------------------------------------------------------
struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  int64_t t = 0;  // completed steps; bias correction uses t >= 1
  std::unordered_map<std::string, std::vector<double>> m, v;
};

inline void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const std::string& path : params.paths()) {
    Tensor leaf = params.get(path);
    const int64_t n = leaf.size();
    std::vector<double>& m = state.m[path];
    std::vector<double>& v = state.v[path];
    if (m.empty()) m.assign(static_cast<size_t>(n), 0.0);
    if (v.empty()) v.assign(static_cast<size_t>(n), 0.0);
    if (static_cast<int64_t>(m.size()) != n || static_cast<int64_t>(v.size()) != n)
      throw std::invalid_argument("adam_step: moment shape mismatch at '" + path + "'");
    const std::vector<double>* g = grads.find(leaf.node().get());
    const double* gp = g ? g->data() : nullptr;
    double* mp = m.data();
    double* vp = v.data();
    double* wp = leaf.data();
    const double c1 = 1.0 - cfg.beta1, c2 = 1.0 - cfg.beta2;
    const double scale = cfg.lr / bc1, vinv = 1.0 / bc2;
    // single fused pass: the update is bandwidth-bound at this size
    for (int64_t i = 0; i < n; ++i) {
      const double gi = gp ? gp[i] : 0.0;  // absent gradient = off the loss path
      const double mi = cfg.beta1 * mp[i] + c1 * gi;
      const double vi = cfg.beta2 * vp[i] + c2 * gi * gi;
      mp[i] = mi;
      vp[i] = vi;
      wp[i] -= scale * mi / (std::sqrt(vi * vinv) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training configuration and the checkpoint container.
// ---------------------------------------------------------------------------
struct TrainConfig {
  int64_t batch_size = 8;  // desk-scale default
  double lr = 2e-5;
  int64_t steps = 2000;
  uint64_t seed = 0;
  Variant variant = Variant::kFull;
  std::string dataset_path;
  std::string checkpoint_path;
  std::string log_path;  // loss-curve CSV; empty = not written by train()
  HttConfig htt;
  LossWeights weights;
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be at least 1");
  if (cfg.steps < 0) throw std::invalid_argument("TrainConfig: steps must be non-negative");
  validate(cfg.htt);
}

struct Checkpoint {
  Model model;
  AdamState opt;
  TrainConfig cfg;  // configuration echo
  Rng rng;          // training stream state at save time
  int64_t step = 0;
};

// ---------------------------------------------------------------------------
// Window plumbing shared by training and inference.
// ---------------------------------------------------------------------------
inline Tensor imu_window_tensor(const ImuSequence& imu, int64_t t0, int64_t len) {
  if (t0 < 0 || t0 + len > imu.frames()) throw std::invalid_argument("imu_window_tensor: window out of range");
  std::vector<double> v(static_cast<size_t>(len * ImuSequence::kChannels));
  std::copy_n(imu.frame(t0), v.size(), v.begin());
  return Tensor::from({len, kNumSensors, kSensorChannels}, std::move(v), false);
}

inline TrainItem make_train_item(const SequenceRecord& rec, const Skeleton& skel, int64_t t0, int64_t len) {
  WindowTargets tgt = build_targets(rec.motion, skel, t0, len);
  TrainItem item;
  item.x = imu_window_tensor(rec.imu, t0, len);
  item.labels = rec.motion.labels;
  item.t0 = t0;
  item.q_gt = Tensor::from({len, kNumJoints, 6}, std::move(tgt.q), false);
  item.p_gt = Tensor::from({len, kNumJoints, 3}, std::move(tgt.p), false);
  item.s_gt = Tensor::from({len, 3}, std::move(tgt.s), false);
  return item;
}

namespace detail {

inline void append_csv_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace detail

// Train a model on random 80-frame windows of the dataset. All sampling and
// resampling noise is drawn from one seeded stream, so identical
// (config, dataset, seed) reproduce the checkpoint and the loss CSV exactly.
// When loss_csv is non-null the log accumulates there as well.
inline Checkpoint train(const TrainConfig& cfg, const Dataset& data, std::string* loss_csv = nullptr) {
  validate(cfg);
  if (data.records.empty()) throw std::invalid_argument("train: dataset is empty");
  const int64_t window = cfg.htt.frames;
  for (const SequenceRecord& rec : data.records) {
    if (rec.motion.frames() < window || rec.imu.frames() < window)
      throw std::invalid_argument("train: every sequence must span at least one window");
    if (rec.motion.frames() != rec.imu.frames())
      throw std::invalid_argument("train: motion/imu frame count mismatch");
  }

  std::vector<std::string> phrases;
  for (const SequenceRecord& rec : data.records)
    for (const TextLabel& l : rec.motion.labels) phrases.push_back(l.text);
  Vocabulary vocab = Vocabulary::from_phrases(phrases);

  ModelConfig mcfg{cfg.variant, cfg.htt, cfg.weights};
  Checkpoint ckpt;
  ckpt.model = make_model(mcfg, vocab, cfg.seed);
  ckpt.cfg = cfg;
  ckpt.rng = Rng(cfg.seed).derive(1);  // training stream, distinct from init
  const Skeleton& skel = default_skeleton();

  std::string log = "step,l_sigma,l_contrastive,l_recon,total,tau\n";
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    std::vector<TrainItem> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const SequenceRecord& rec = data.records[ckpt.rng.uniform_index(data.records.size())];
      const int64_t t0 = static_cast<int64_t>(ckpt.rng.uniform_index(static_cast<uint64_t>(rec.motion.frames() - window + 1)));
      batch.push_back(make_train_item(rec, skel, t0, window));
    }
    LossBreakdown loss = total_loss(ckpt.model, batch, ckpt.rng);
    GradMap grads = backward(loss.total);
    adam_step(ckpt.model.params, grads, ckpt.opt, AdamConfig{cfg.lr});
    ckpt.step = step;

    log += std::to_string(step);
    for (double v : {loss.l_sigma.item(), loss.l_contrastive.item(), loss.l_recon.item(), loss.total.item()}) {
      log += ',';
      detail::append_csv_double(log, v);
    }
    log += ',';
    detail::append_csv_double(log, ckpt.model.params.has("fusion.log_tau")
                                       ? std::exp(ckpt.model.params.get("fusion.log_tau").values()[0])
                                       : 0.0);
    log += '\n';
  }

  if (loss_csv) *loss_csv = log;
  if (!cfg.log_path.empty()) {
    std::ofstream f(cfg.log_path, std::ios::binary);
    if (!f) throw std::runtime_error("train: cannot write loss log '" + cfg.log_path + "'");
    f << log;
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic, little-endian u64 header length, header JSON, then
// a flat 64-bit payload holding parameters and both Adam moments path-indexed
// in registration order. Deterministic serialization makes save->load->save
// byte-identical.
// ---------------------------------------------------------------------------
inline constexpr char kCheckpointMagic[8] = {'I', 'M', 'U', 'P', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"steps", cfg.steps},
          {"seed", cfg.seed},
          {"variant", to_string(cfg.variant)},
          {"dataset_path", cfg.dataset_path},
          {"checkpoint_path", cfg.checkpoint_path},
          {"log_path", cfg.log_path},
          {"htt",
           {{"frames", cfg.htt.frames},
            {"window", cfg.htt.window},
            {"shift", cfg.htt.shift},
            {"stages", cfg.htt.stages},
            {"base_dim", cfg.htt.base_dim},
            {"heads", cfg.htt.heads}}},
          {"weights",
           {{"delta", cfg.weights.delta},
            {"gamma", cfg.weights.gamma},
            {"lambda", cfg.weights.lambda},
            {"beta", cfg.weights.beta},
            {"alpha", cfg.weights.alpha}}}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.batch_size = j.at("batch_size").get<int64_t>();
  cfg.lr = j.at("lr").get<double>();
  cfg.steps = j.at("steps").get<int64_t>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  cfg.dataset_path = j.at("dataset_path").get<std::string>();
  cfg.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  cfg.log_path = j.at("log_path").get<std::string>();
  const nlohmann::json& h = j.at("htt");
  cfg.htt = HttConfig{h.at("frames").get<int64_t>(), h.at("window").get<int64_t>(), h.at("shift").get<int64_t>(),
                      h.at("stages").get<int64_t>(), h.at("base_dim").get<int64_t>(), h.at("heads").get<int64_t>()};
  const nlohmann::json& w = j.at("weights");
  cfg.weights = LossWeights{w.at("delta").get<double>(), w.at("gamma").get<double>(), w.at("lambda").get<double>(),
                            w.at("beta").get<double>(), w.at("alpha").get<double>()};
  return cfg;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const ParamStore& ps = ckpt.model.params;
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["step"] = ckpt.step;
  header["train"] = detail::train_config_to_json(ckpt.cfg);
  header["vocab"] = ckpt.model.vocab.phrases;
  header["rng"] = ckpt.rng.serialize();
  header["adam_t"] = ckpt.opt.t;
  nlohmann::json params = nlohmann::json::array();
  for (const std::string& p : ps.paths()) params.push_back({{"path", p}, {"shape", ps.get(p).shape()}});
  header["params"] = std::move(params);

  std::vector<double> payload;
  payload.reserve(static_cast<size_t>(3 * ps.total_size()));
  for (const std::string& p : ps.paths()) {
    const std::vector<double>& v = ps.get(p).values();
    payload.insert(payload.end(), v.begin(), v.end());
  }
  for (const char* part : {"m", "v"}) {
    for (const std::string& p : ps.paths()) {
      const auto& map = *part == 'm' ? ckpt.opt.m : ckpt.opt.v;
      auto it = map.find(p);
      if (it != map.end()) {
        payload.insert(payload.end(), it->second.begin(), it->second.end());
      } else {
        payload.insert(payload.end(), static_cast<size_t>(ps.get(p).size()), 0.0);
      }
    }
  }

  const std::string head = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint64_t head_len = head.size();
  f.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_checkpoint: '" + path + "' is not a checkpoint file");
  uint64_t head_len = 0;
  f.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  std::string head(head_len, '\0');
  f.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!f) throw std::runtime_error("load_checkpoint: truncated header in '" + path + "'");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: bad header in '" + path + "': " + e.what());
  }
  if (header.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in '" + path + "'");

  Checkpoint ckpt;
  ckpt.cfg = detail::train_config_from_json(header.at("train"));
  ckpt.step = header.at("step").get<int64_t>();
  ckpt.opt.t = header.at("adam_t").get<int64_t>();
  ckpt.rng.deserialize(header.at("rng").get<std::array<uint64_t, 6>>());
  Vocabulary vocab;
  vocab.phrases = header.at("vocab").get<std::vector<std::string>>();

  ModelConfig mcfg{ckpt.cfg.variant, ckpt.cfg.htt, ckpt.cfg.weights};
  ckpt.model = make_model(mcfg, vocab, ckpt.cfg.seed);
  ParamStore& ps = ckpt.model.params;

  const nlohmann::json& params = header.at("params");
  if (params.size() != ps.count()) throw std::runtime_error("load_checkpoint: parameter layout mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string p = params[i].at("path").get<std::string>();
    if (p != ps.paths()[i] || params[i].at("shape").get<Shape>() != ps.get(p).shape())
      throw std::runtime_error("load_checkpoint: parameter layout mismatch at '" + p + "'");
  }

  std::vector<double> payload(static_cast<size_t>(3 * ps.total_size()));
  f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!f || f.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(double)))
    throw std::runtime_error("load_checkpoint: truncated payload in '" + path + "'");

  size_t off = 0;
  for (const std::string& p : ps.paths()) {
    Tensor leaf = ps.get(p);
    std::copy_n(payload.begin() + static_cast<int64_t>(off), leaf.size(), leaf.data());
    off += static_cast<size_t>(leaf.size());
  }
  for (auto* map : {&ckpt.opt.m, &ckpt.opt.v}) {
    for (const std::string& p : ps.paths()) {
      const size_t n = static_cast<size_t>(ps.get(p).size());
      (*map)[p].assign(payload.begin() + static_cast<int64_t>(off), payload.begin() + static_cast<int64_t>(off + n));
      off += n;
    }
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Inference outputs as plain per-frame arrays (no autodiff graph attached).
// ---------------------------------------------------------------------------
struct PoseEstimate {
  int64_t frames = 0;
  std::vector<double> q;  // frames x 15 x 6
  std::vector<double> p;  // frames x 15 x 3
  std::vector<double> s;  // frames x 3
};

inline PoseEstimate make_pose_estimate(int64_t frames) {
  PoseEstimate e;
  e.frames = frames;
  e.q.assign(static_cast<size_t>(frames * kNumJoints * 6), 0.0);
  e.p.assign(static_cast<size_t>(frames * kNumJoints * 3), 0.0);
  e.s.assign(static_cast<size_t>(frames * 3), 0.0);
  return e;
}

// Centered moving average with the window truncated at sequence boundaries.
// Positions and velocities average directly; rotations average in 6D and are
// re-orthonormalized through the rotation-matrix round trip.
inline PoseEstimate moving_average_smooth(const PoseEstimate& in, int64_t w) {
  if (w < 1 || w % 2 == 0) throw std::invalid_argument("moving_average_smooth: window must be odd and positive");
  if (w == 1) return in;
  const int64_t T = in.frames, h = w / 2;
  PoseEstimate out = make_pose_estimate(T);
  auto average = [&](const std::vector<double>& src, std::vector<double>& dst, int64_t width) {
    for (int64_t t = 0; t < T; ++t) {
      const int64_t lo = std::max<int64_t>(0, t - h), hi = std::min<int64_t>(T - 1, t + h);
      const double count = static_cast<double>(hi - lo + 1);
      for (int64_t c = 0; c < width; ++c) {
        double acc = 0.0;
        for (int64_t u = lo; u <= hi; ++u) acc += src[static_cast<size_t>(u * width + c)];
        dst[static_cast<size_t>(t * width + c)] = acc / count;
      }
    }
  };
  average(in.q, out.q, kNumJoints * 6);
  average(in.p, out.p, kNumJoints * 3);
  average(in.s, out.s, 3);
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t j = 0; j < kNumJoints; ++j) {
      Rot6d r;
      std::copy_n(out.q.begin() + (t * kNumJoints + j) * 6, 6, r.begin());
      try {
        r = matrix_to_rot6d(rot6d_to_matrix(r));
      } catch (const std::invalid_argument&) {
        // averaged columns degenerate (near-zero or parallel): keep the raw
        // average rather than inventing an orientation
      }
      std::copy_n(r.begin(), 6, out.q.begin() + (t * kNumJoints + j) * 6);
    }
  }
  return out;
}

struct OfflineResult {
  PoseEstimate raw;       // spliced window outputs
  PoseEstimate smoothed;  // after the moving average
};

inline constexpr int64_t kSmoothWindow = 15;

// Offline inference: consecutive windows plus a right-aligned final window;
// overlapping frames take the later window's output.
inline OfflineResult infer_offline(const Model& model, const ImuSequence& imu, const std::vector<TextLabel>& labels) {
  const int64_t T = model.cfg.htt.frames;
  const int64_t len = imu.frames();
  if (len < T) throw std::invalid_argument("infer_offline: sequence shorter than one window");
  std::vector<int64_t> starts;
  for (int64_t s = 0; s + T <= len; s += T) starts.push_back(s);
  if (starts.back() + T < len) starts.push_back(len - T);

  OfflineResult out;
  out.raw = make_pose_estimate(len);
  Rng unused(0);  // inference never reads the stream
  for (int64_t s : starts) {
    ForwardResult fr = model_forward(model, imu_window_tensor(imu, s, T), labels, s, SampleMode::kInfer, unused);
    std::copy_n(fr.pose.q.values().begin(), T * kNumJoints * 6, out.raw.q.begin() + s * kNumJoints * 6);
    std::copy_n(fr.pose.p.values().begin(), T * kNumJoints * 3, out.raw.p.begin() + s * kNumJoints * 3);
    std::copy_n(fr.pose.s.values().begin(), T * 3, out.raw.s.begin() + s * 3);
  }
  out.smoothed = moving_average_smooth(out.raw, kSmoothWindow);
  return out;
}

// ---------------------------------------------------------------------------
// Online inference for the text-free variant: an 80-frame sliding buffer of
// 70 past + 5 current + 5 future frames. Once the buffer fills, every 5th
// arriving frame triggers a window pass that emits the 5 "current" frames,
// so the newest emitted frame trails the newest arrival by exactly 5 frames.
// ---------------------------------------------------------------------------
struct OnlineReport {
  int64_t frames_seen = 0;
  int64_t frames_emitted = 0;
  int64_t first_emitted_frame = -1;
  int64_t latency_frames = 0;  // newest emission lag behind newest arrival
  bool underrun = false;       // stream ended before one full window
};

class OnlineSession {
 public:
  static constexpr int64_t kCurrentFrames = 5;
  static constexpr int64_t kFutureFrames = 5;

  explicit OnlineSession(const Model& model, int64_t smooth_window = kSmoothWindow)
      : model_(model), window_(model.cfg.htt.frames), smooth_window_(smooth_window) {
    if (model.cfg.variant != Variant::kSensorOnly)
      throw std::invalid_argument("OnlineSession: online inference requires the sensor_only variant");
    if (smooth_window_ < 1 || smooth_window_ % 2 == 0)
      throw std::invalid_argument("OnlineSession: smoothing window must be odd and positive");
  }

  // Feed one frame of 72 channels; returns how many new frames were emitted
  // (0 or kCurrentFrames). Safe to call from a producer thread.
  int64_t push(const double* frame, int64_t channels) {
    if (channels != ImuSequence::kChannels) throw std::invalid_argument("OnlineSession: expected 72 channels");
    std::lock_guard<std::mutex> lock(mu_);
    buffer_.insert(buffer_.end(), frame, frame + channels);
    const int64_t n = frames_seen();
    if (n < window_ || (n - window_) % kCurrentFrames != 0) return 0;

    ImuSequence window_imu;
    window_imu.data.assign(buffer_.end() - window_ * ImuSequence::kChannels, buffer_.end());
    Rng unused(0);
    ForwardResult fr =
        model_forward(model_, imu_window_tensor(window_imu, 0, window_), {}, n - window_, SampleMode::kInfer, unused);

    const int64_t base = window_ - kCurrentFrames - kFutureFrames;  // first emitted window position
    last_latency_ = kFutureFrames;  // newest emitted frame trails arrival n-1 by exactly this
    for (int64_t k = 0; k < kCurrentFrames; ++k) {
      emitted_frames_.push_back(n - window_ + base + k);
      const int64_t src = base + k;
      raw_.q.insert(raw_.q.end(), fr.pose.q.values().begin() + src * kNumJoints * 6,
                    fr.pose.q.values().begin() + (src + 1) * kNumJoints * 6);
      raw_.p.insert(raw_.p.end(), fr.pose.p.values().begin() + src * kNumJoints * 3,
                    fr.pose.p.values().begin() + (src + 1) * kNumJoints * 3);
      raw_.s.insert(raw_.s.end(), fr.pose.s.values().begin() + src * 3, fr.pose.s.values().begin() + (src + 1) * 3);
      raw_.frames = static_cast<int64_t>(emitted_frames_.size());
      append_causal_smoothed();
    }
    return kCurrentFrames;
  }

  int64_t frames_seen() const { return static_cast<int64_t>(buffer_.size()) / ImuSequence::kChannels; }
  const std::vector<int64_t>& emitted_frames() const { return emitted_frames_; }
  const PoseEstimate& raw() const { return raw_; }
  const PoseEstimate& smoothed() const { return smoothed_; }

  OnlineReport report() const {
    OnlineReport r;
    r.frames_seen = frames_seen();
    r.frames_emitted = raw_.frames;
    r.first_emitted_frame = emitted_frames_.empty() ? -1 : emitted_frames_.front();
    r.latency_frames = last_latency_;
    r.underrun = emitted_frames_.empty();
    return r;
  }

 private:
  // Causal smoothing: the newest emitted frame averages the trailing window
  // of already-emitted raw frames; earlier frames keep their published value.
  void append_causal_smoothed() {
    const int64_t i = raw_.frames - 1;
    const int64_t lo = std::max<int64_t>(0, i - smooth_window_ + 1);
    const double count = static_cast<double>(i - lo + 1);
    auto avg_tail = [&](const std::vector<double>& src, std::vector<double>& dst, int64_t width) {
      for (int64_t c = 0; c < width; ++c) {
        double acc = 0.0;
        for (int64_t u = lo; u <= i; ++u) acc += src[static_cast<size_t>(u * width + c)];
        dst.push_back(acc / count);
      }
    };
    avg_tail(raw_.q, smoothed_.q, kNumJoints * 6);
    avg_tail(raw_.p, smoothed_.p, kNumJoints * 3);
    avg_tail(raw_.s, smoothed_.s, 3);
    smoothed_.frames = raw_.frames;
    for (int64_t j = 0; j < kNumJoints; ++j) {
      Rot6d r;
      std::copy_n(smoothed_.q.begin() + (i * kNumJoints + j) * 6, 6, r.begin());
      try {
        r = matrix_to_rot6d(rot6d_to_matrix(r));
      } catch (const std::invalid_argument&) {
        // degenerate average: keep it rather than inventing an orientation
      }
      std::copy_n(r.begin(), 6, smoothed_.q.begin() + (i * kNumJoints + j) * 6);
    }
  }

  const Model& model_;
  const int64_t window_;
  const int64_t smooth_window_;
  std::mutex mu_;
  std::vector<double> buffer_;  // all frames seen, 72 channels each
  std::vector<int64_t> emitted_frames_;
  int64_t last_latency_ = 0;
  PoseEstimate raw_, smoothed_;
};

struct OnlineRun {
  PoseEstimate raw;
  PoseEstimate smoothed;
  std::vector<int64_t> emitted_frames;
  OnlineReport report;
};

// Convenience driver: replay a recorded sequence through an online session.
inline OnlineRun run_online(const Model& model, const ImuSequence& imu, int64_t smooth_window = kSmoothWindow) {
  OnlineSession session(model, smooth_window);
  for (int64_t t = 0; t < imu.frames(); ++t) session.push(imu.frame(t), ImuSequence::kChannels);
  return OnlineRun{session.raw(), session.smoothed(), session.emitted_frames(), session.report()};
}

}  // namespace imupose
