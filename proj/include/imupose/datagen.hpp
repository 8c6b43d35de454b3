#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "imupose/dataset.hpp"
#include "imupose/kinematics.hpp"
#include "imupose/rng.hpp"

namespace imupose {

enum class MotionKind { kWalk, kWave, kSquat, kSitTransition, kStandIdle, kSitIdle, kMixed };

inline const std::vector<std::pair<MotionKind, std::string>>& motion_kind_names() {
  static const std::vector<std::pair<MotionKind, std::string>> names = {
      {MotionKind::kWalk, "walk"},       {MotionKind::kWave, "wave"},
      {MotionKind::kSquat, "squat"},     {MotionKind::kSitTransition, "sit_transition"},
      {MotionKind::kStandIdle, "stand_idle"}, {MotionKind::kSitIdle, "sit_idle"},
      {MotionKind::kMixed, "mixed"}};
  return names;
}

inline std::string to_string(MotionKind k) {
  for (const auto& [kind, name] : motion_kind_names())
    if (kind == k) return name;
  throw std::invalid_argument("unknown motion kind");
}

inline MotionKind motion_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : motion_kind_names())
    if (name == s) return kind;
  throw std::invalid_argument("unknown motion kind '" + s + "'");
}

// The closed label set emitted by the generators. The text encoder's
// vocabulary is built from this list (plus an UNK row), so every phrase the
// model can meet at train time has an embedding.
inline const std::vector<std::string>& vocabulary_phrases() {
  static const std::vector<std::string> phrases = {
      "walk forward", "move around", "wave hand",  "warm up",      "squat",       "exercise",
      "sit down",     "stand up",    "rest",       "sit still",    "stand still", "jog in place",
      "step left",    "step right",  "raise arm",  "lower arm",    "nod head",    "bend knees",
      "hold squat",   "rise up",     "lean forward", "straighten up", "stand",     "sit",
      "idle",         "turn left",   "turn right", "stretch",      "swing arms"};
  return phrases;
}

namespace detail {

inline double smoothstep01(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Settle envelope for idle starts: decays to exactly zero at frame 60 and
// stays zero, so steady state is bit-reproducible.
inline double settle_env(int64_t t) {
  if (t >= 60) return 0.0;
  const double u = 1.0 - static_cast<double>(t) / 60.0;
  return u * u;
}

// Ease-in/ease-out window over [0, len) with `ramp`-frame shoulders.
inline double segment_env(int64_t t, int64_t len, int64_t ramp = 20) {
  const double a = smoothstep01(static_cast<double>(t) / static_cast<double>(ramp));
  const double b = smoothstep01(static_cast<double>(len - 1 - t) / static_cast<double>(ramp));
  return a * b;
}

// Scalar joint-angle tracks; poses are assembled from these at the end.
struct Tracks {
  int64_t frames;
  // [0]=left, [1]=right, radians
  std::vector<double> upleg[2], lowleg[2], uparm_swing[2], uparm_raise[2], elbow[2];
  std::vector<double> spine_lean, neck_nod, root_yaw;
  std::vector<Vec3> root;

  explicit Tracks(int64_t len, Vec3 root0) : frames(len) {
    for (int s = 0; s < 2; ++s) {
      upleg[s].assign(len, 0.0);
      lowleg[s].assign(len, 0.0);
      uparm_swing[s].assign(len, 0.0);
      uparm_raise[s].assign(len, 0.0);
      elbow[s].assign(len, 0.0);
    }
    spine_lean.assign(len, 0.0);
    neck_nod.assign(len, 0.0);
    root_yaw.assign(len, 0.0);
    root.assign(len, root0);
  }

  Pose assemble(int64_t t) const {
    Pose p = Pose::rest();
    auto set = [&](int joint, const Mat3& m) { p.local_rot6d[joint] = matrix_to_rot6d(m); };
    if (root_yaw[t] != 0.0) set(kPelvis, rot_y(root_yaw[t]));
    if (spine_lean[t] != 0.0) set(kSpine1, rot_x(spine_lean[t]));
    if (neck_nod[t] != 0.0) set(kNeck, rot_x(neck_nod[t]));
    const int up[2] = {kLUpLeg, kRUpLeg}, low[2] = {kLLowLeg, kRLowLeg};
    const int ua[2] = {kLUpArm, kRUpArm}, la[2] = {kLLowArm, kRLowArm};
    for (int s = 0; s < 2; ++s) {
      if (upleg[s][t] != 0.0) set(up[s], rot_x(upleg[s][t]));
      if (lowleg[s][t] != 0.0) set(low[s], rot_x(lowleg[s][t]));
      const double raise = s == 0 ? uparm_raise[s][t] : -uparm_raise[s][t];
      if (uparm_swing[s][t] != 0.0 || raise != 0.0) set(ua[s], mat3_mul(rot_x(uparm_swing[s][t]), rot_z(raise)));
      if (elbow[s][t] != 0.0) set(la[s], rot_x(elbow[s][t]));
    }
    p.root_pos = root[t];
    return p;
  }
};

inline void add_label(std::vector<TextLabel>& out, const std::string& text, int64_t a, int64_t b,
                      TextLabel::Level level) {
  if (b < a) return;
  out.push_back({text, a, b, level});
}

// Walking gait written into tracks[at, at+len); advances root along the
// current heading. Used by kWalk and by mixed-sequence walk/jog segments.
struct GaitStyle {
  double freq_hz, leg_amp, knee_amp, arm_amp, speed, bob_amp;
};

inline void write_gait(Tracks& tr, std::vector<TextLabel>& labels, int64_t at, int64_t len, const GaitStyle& g,
                       double base_y) {
  const double w = 2.0 * kPi * g.freq_hz;
  for (int64_t t = 0; t < len; ++t) {
    const double env = segment_env(t, len);
    const double ph = w * static_cast<double>(t) / kFps;
    const int64_t i = at + t;
    tr.upleg[0][i] += g.leg_amp * std::sin(ph) * env;
    tr.upleg[1][i] += -g.leg_amp * std::sin(ph) * env;
    tr.lowleg[0][i] += g.knee_amp * 0.5 * (1.0 - std::cos(ph)) * env;
    tr.lowleg[1][i] += g.knee_amp * 0.5 * (1.0 + std::cos(ph)) * env;
    tr.uparm_swing[0][i] += -g.arm_amp * std::sin(ph) * env;
    tr.uparm_swing[1][i] += g.arm_amp * std::sin(ph) * env;
    tr.elbow[0][i] += -0.25 * g.arm_amp * (1.0 - std::cos(ph)) * env;
    tr.elbow[1][i] += -0.25 * g.arm_amp * (1.0 + std::cos(ph)) * env;
    tr.spine_lean[i] += -deg_to_rad(3.0) * env;
    tr.root[i][1] = base_y + g.bob_amp * std::sin(2.0 * ph) * env;
    if (t + 1 < len && g.speed > 0.0) {
      // advance along the instantaneous heading
      Vec3 step = mat3_apply(rot_y(tr.root_yaw[i]), Vec3{0, 0, g.speed / kFps * env});
      tr.root[at + t + 1][0] = tr.root[i][0] + step[0];
      tr.root[at + t + 1][2] = tr.root[i][2] + step[2];
    }
  }
  // propagate final planar position to any frames after the segment
  for (int64_t i = at + len; i < tr.frames; ++i) {
    tr.root[i][0] = tr.root[at + len - 1][0];
    tr.root[i][2] = tr.root[at + len - 1][2];
  }
  // step labels per half gait cycle: left swings forward while sin > 0
  const int64_t period = static_cast<int64_t>(std::lround(kFps / g.freq_hz));
  for (int64_t k = 0; k * period < len; ++k) {
    const int64_t a = at + k * period;
    const int64_t mid = std::min(at + k * period + period / 2, at + len);
    const int64_t b = std::min(at + (k + 1) * period, at + len);
    if (a < mid) add_label(labels, "step left", a, mid - 1, TextLabel::Level::kFrame);
    if (mid < b) add_label(labels, "step right", mid, b - 1, TextLabel::Level::kFrame);
  }
  add_label(labels, "swing arms", at, at + len - 1, TextLabel::Level::kFrame);
}

inline void write_wave(Tracks& tr, std::vector<TextLabel>& labels, int64_t at, int64_t len, Rng& rng) {
  const double raise = deg_to_rad(rng.uniform(95.0, 130.0));
  const double f_w = rng.uniform(1.5, 2.5);
  const double amp = deg_to_rad(rng.uniform(15.0, 25.0));
  const int64_t up = std::min<int64_t>(50, len / 4);
  const int64_t down = std::min<int64_t>(40, len / 4);
  const int64_t wave_end = len - down;
  for (int64_t t = 0; t < len; ++t) {
    const int64_t i = at + t;
    double lift;
    if (t < up)
      lift = smoothstep01(static_cast<double>(t) / up);
    else if (t < wave_end)
      lift = 1.0;
    else
      lift = 1.0 - smoothstep01(static_cast<double>(t - wave_end) / down);
    tr.uparm_raise[1][i] += raise * lift;
    const double wenv = (t >= up && t < wave_end) ? segment_env(t - up, wave_end - up, 15) : 0.0;
    tr.elbow[1][i] += amp * std::sin(2.0 * kPi * f_w * static_cast<double>(t - up) / kFps) * wenv;
    tr.neck_nod[i] += deg_to_rad(4.0) * std::sin(2.0 * kPi * 0.5 * static_cast<double>(t) / kFps) * wenv;
  }
  add_label(labels, "raise arm", at, at + up - 1, TextLabel::Level::kFrame);
  add_label(labels, "wave hand", at + up, at + wave_end - 1, TextLabel::Level::kFrame);
  add_label(labels, "nod head", at + up, at + wave_end - 1, TextLabel::Level::kFrame);
  add_label(labels, "lower arm", at + wave_end, at + len - 1, TextLabel::Level::kFrame);
}

inline void write_squat_rep(Tracks& tr, std::vector<TextLabel>& labels, int64_t at, int64_t len, double theta_max,
                            double base_y) {
  const int64_t down = len * 3 / 10, hold = len * 2 / 10, rise = len * 3 / 10;
  const int64_t stand_at = down + hold + rise;
  for (int64_t t = 0; t < len; ++t) {
    double th;
    if (t < down)
      th = theta_max * smoothstep01(static_cast<double>(t) / down);
    else if (t < down + hold)
      th = theta_max;
    else if (t < stand_at)
      th = theta_max * (1.0 - smoothstep01(static_cast<double>(t - down - hold) / rise));
    else
      th = 0.0;
    const int64_t i = at + t;
    for (int s = 0; s < 2; ++s) {
      tr.upleg[s][i] += -th;
      tr.lowleg[s][i] += th;
      tr.uparm_swing[s][i] += -th / 3.0;
    }
    tr.spine_lean[i] += -th / 4.0;
    tr.root[i][1] = base_y - 0.42 * (1.0 - std::cos(th));
  }
  add_label(labels, "bend knees", at, at + down - 1, TextLabel::Level::kFrame);
  add_label(labels, "lean forward", at, at + down - 1, TextLabel::Level::kFrame);
  add_label(labels, "hold squat", at + down, at + down + hold - 1, TextLabel::Level::kFrame);
  add_label(labels, "rise up", at + down + hold, at + stand_at - 1, TextLabel::Level::kFrame);
  add_label(labels, "straighten up", at + down + hold + rise * 2 / 3, at + stand_at - 1, TextLabel::Level::kFrame);
  if (stand_at < len) add_label(labels, "stand", at + stand_at, at + len - 1, TextLabel::Level::kFrame);
}

inline void write_turn(Tracks& tr, std::vector<TextLabel>& labels, int64_t at, int64_t len, double yaw_delta) {
  const double start = tr.root_yaw[at];
  for (int64_t t = 0; t < len; ++t)
    tr.root_yaw[at + t] = start + yaw_delta * smoothstep01(static_cast<double>(t) / static_cast<double>(len - 1));
  for (int64_t i = at + len; i < tr.frames; ++i) tr.root_yaw[i] = start + yaw_delta;  // heading persists
  add_label(labels, yaw_delta > 0 ? "turn left" : "turn right", at, at + len - 1, TextLabel::Level::kFrame);
}

inline void write_stretch(Tracks& tr, std::vector<TextLabel>& labels, int64_t at, int64_t len, Rng& rng) {
  const double raise = deg_to_rad(rng.uniform(140.0, 165.0));
  const int64_t up = len * 3 / 10, hold = len * 4 / 10;
  for (int64_t t = 0; t < len; ++t) {
    double lift;
    if (t < up)
      lift = smoothstep01(static_cast<double>(t) / up);
    else if (t < up + hold)
      lift = 1.0;
    else
      lift = 1.0 - smoothstep01(static_cast<double>(t - up - hold) / (len - up - hold));
    const int64_t i = at + t;
    tr.uparm_raise[0][i] += raise * lift;
    tr.uparm_raise[1][i] += raise * lift;
    tr.spine_lean[i] += deg_to_rad(4.0) * lift;  // slight backward arch
  }
  add_label(labels, "raise arm", at, at + up - 1, TextLabel::Level::kFrame);
  add_label(labels, "stretch", at + up, at + up + hold - 1, TextLabel::Level::kFrame);
  add_label(labels, "lower arm", at + up + hold, at + len - 1, TextLabel::Level::kFrame);
}

// Small decaying fidget on arms/spine/neck over the first 60 frames; shared
// by both idle kinds so a common seed produces identical sensor motion.
inline void write_settle(Tracks& tr, Rng& rng) {
  const double amp_e = deg_to_rad(rng.uniform(2.0, 4.0));
  const double amp_s = deg_to_rad(rng.uniform(1.0, 2.0));
  const double f = rng.uniform(0.8, 1.6);
  const int64_t n = std::min<int64_t>(60, tr.frames);
  for (int64_t t = 0; t < n; ++t) {
    const double e = settle_env(t) * std::sin(2.0 * kPi * f * static_cast<double>(t) / kFps);
    tr.elbow[0][t] += amp_e * e;
    tr.elbow[1][t] += -amp_e * e;
    tr.spine_lean[t] += amp_s * e;
    tr.neck_nod[t] += 0.5 * amp_s * e;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generate_motion: deterministic procedural motion with text labels.
// sit_idle and stand_idle consume identical random draws, so with equal seeds
// they differ only in the constant leg fold — the sensor-level ambiguity the
// model must resolve from text.
// ---------------------------------------------------------------------------
inline MotionSequence generate_motion(MotionKind kind, int64_t length, Rng& rng) {
  if (length < 80) throw std::invalid_argument("generate_motion: length must be >= 80");
  using detail::Tracks;
  using detail::add_label;
  using Level = TextLabel::Level;
  const Vec3 root0{rng.uniform(-0.5, 0.5), 0.9, rng.uniform(-0.5, 0.5)};
  Tracks tr(length, root0);
  MotionSequence out;

  switch (kind) {
    case MotionKind::kWalk: {
      detail::GaitStyle g{rng.uniform(0.8, 1.2),           deg_to_rad(rng.uniform(15.0, 30.0)),
                          deg_to_rad(rng.uniform(10.0, 20.0)), deg_to_rad(rng.uniform(8.0, 16.0)),
                          rng.uniform(0.5, 1.2),           rng.uniform(0.015, 0.025)};
      const bool turns = rng.uniform01() < 0.35;
      const double yaw = (rng.uniform01() < 0.5 ? 1.0 : -1.0) * deg_to_rad(rng.uniform(30.0, 70.0));
      if (turns) detail::write_turn(tr, out.labels, length / 4, length / 2, yaw);
      detail::write_gait(tr, out.labels, 0, length, g, root0[1]);
      add_label(out.labels, "walk forward", 0, length - 1, Level::kSequence);
      add_label(out.labels, "move around", 0, length - 1, Level::kSequence);
      break;
    }
    case MotionKind::kWave: {
      detail::write_wave(tr, out.labels, 0, length - 20, rng);
      add_label(out.labels, "idle", length - 20, length - 1, Level::kFrame);
      add_label(out.labels, "wave hand", 0, length - 1, Level::kSequence);
      add_label(out.labels, "warm up", 0, length - 1, Level::kSequence);
      break;
    }
    case MotionKind::kSquat: {
      const double theta = deg_to_rad(rng.uniform(60.0, 90.0));
      const int64_t rep_len = 150;
      int64_t at = 10;
      while (at + rep_len <= length - 10) {
        detail::write_squat_rep(tr, out.labels, at, rep_len, theta, root0[1]);
        at += rep_len;
      }
      if (at == 10) detail::write_squat_rep(tr, out.labels, 10, length - 20, theta, root0[1]);
      add_label(out.labels, "squat", 0, length - 1, Level::kSequence);
      add_label(out.labels, "exercise", 0, length - 1, Level::kSequence);
      break;
    }
    case MotionKind::kSitTransition: {
      const bool sitting_down = rng.uniform01() < 0.5;
      const int64_t idle0 = std::min<int64_t>(60 + static_cast<int64_t>(rng.uniform(0.0, 30.0)), length * 3 / 10);
      const int64_t trans = std::min<int64_t>(50 + static_cast<int64_t>(rng.uniform(0.0, 20.0)), length * 3 / 10);
      detail::write_settle(tr, rng);
      for (int64_t t = 0; t < length; ++t) {
        double u;
        if (t < idle0)
          u = 0.0;
        else if (t < idle0 + trans)
          u = detail::smoothstep01(static_cast<double>(t - idle0) / trans);
        else
          u = 1.0;
        const double th = deg_to_rad(90.0) * (sitting_down ? u : 1.0 - u);
        for (int s = 0; s < 2; ++s) {
          tr.upleg[s][t] += -th;
          tr.lowleg[s][t] += th;
        }
        tr.root[t][1] = root0[1] - 0.42 * (1.0 - std::cos(th));
      }
      const char* from = sitting_down ? "stand" : "sit";
      const char* verb = sitting_down ? "sit down" : "stand up";
      const char* to = sitting_down ? "sit" : "stand";
      add_label(out.labels, from, 0, idle0 - 1, Level::kFrame);
      add_label(out.labels, verb, idle0, idle0 + trans - 1, Level::kFrame);
      add_label(out.labels, to, idle0 + trans, length - 1, Level::kFrame);
      add_label(out.labels, verb, 0, length - 1, Level::kSequence);
      add_label(out.labels, "rest", 0, length - 1, Level::kSequence);
      break;
    }
    case MotionKind::kStandIdle:
    case MotionKind::kSitIdle: {
      const bool sitting = kind == MotionKind::kSitIdle;
      detail::write_settle(tr, rng);
      if (sitting) {
        for (int64_t t = 0; t < length; ++t) {
          for (int s = 0; s < 2; ++s) {
            tr.upleg[s][t] += deg_to_rad(-90.0);
            tr.lowleg[s][t] += deg_to_rad(90.0);
          }
          tr.root[t][1] = root0[1] - 0.42;
        }
      }
      add_label(out.labels, sitting ? "sit" : "stand", 0, length - 1, Level::kFrame);
      add_label(out.labels, "idle", 60, length - 1, Level::kFrame);
      add_label(out.labels, sitting ? "sit still" : "stand still", 0, length - 1, Level::kSequence);
      add_label(out.labels, "rest", 0, length - 1, Level::kSequence);
      break;
    }
    case MotionKind::kMixed: {
      const int64_t nseg = 3 + static_cast<int64_t>(rng.uniform_index(3));
      int64_t at = 0;
      for (int64_t seg = 0; seg < nseg && at + 100 <= length; ++seg) {
        const int64_t len = std::min<int64_t>(100 + static_cast<int64_t>(rng.uniform(0.0, 60.0)), length - at);
        switch (rng.uniform_index(6)) {
          case 0: {
            detail::GaitStyle g{rng.uniform(0.8, 1.2), deg_to_rad(22.0), deg_to_rad(14.0), deg_to_rad(12.0),
                                rng.uniform(0.5, 1.0), 0.02};
            detail::write_gait(tr, out.labels, at, len, g, root0[1]);
            add_label(out.labels, "walk forward", at, at + len - 1, Level::kSequence);
            break;
          }
          case 1: {  // jog: faster, stronger, in place
            detail::GaitStyle g{rng.uniform(2.0, 2.6), deg_to_rad(32.0), deg_to_rad(28.0), deg_to_rad(18.0), 0.0,
                                0.035};
            detail::write_gait(tr, out.labels, at, len, g, root0[1]);
            add_label(out.labels, "jog in place", at, at + len - 1, Level::kSequence);
            break;
          }
          case 2:
            detail::write_turn(tr, out.labels, at, len,
                               (rng.uniform01() < 0.5 ? 1.0 : -1.0) * deg_to_rad(rng.uniform(40.0, 90.0)));
            break;
          case 3:
            detail::write_wave(tr, out.labels, at, len, rng);
            add_label(out.labels, "wave hand", at, at + len - 1, Level::kSequence);
            break;
          case 4:
            detail::write_squat_rep(tr, out.labels, at, len, deg_to_rad(rng.uniform(60.0, 85.0)), root0[1]);
            add_label(out.labels, "squat", at, at + len - 1, Level::kSequence);
            break;
          case 5:
            detail::write_stretch(tr, out.labels, at, len, rng);
            add_label(out.labels, "warm up", at, at + len - 1, Level::kSequence);
            break;
        }
        at += len;
      }
      add_label(out.labels, "move around", 0, length - 1, Level::kSequence);
      break;
    }
  }

  out.poses.resize(length);
  for (int64_t t = 0; t < length; ++t) out.poses[t] = tr.assemble(t);
  // order labels for readability: sequence level first, then by start frame
  std::stable_sort(out.labels.begin(), out.labels.end(), [](const TextLabel& a, const TextLabel& b) {
    if (a.level != b.level) return a.level == TextLabel::Level::kSequence;
    return a.start_frame < b.start_frame;
  });
  return out;
}

// ---------------------------------------------------------------------------
// IMU synthesis: rotation channel = FK global rotation of the sensor joint;
// acceleration = central second difference with spacing n over the joint's
// world position. Gravity is EXCLUDED: channels are free accelerations, so a
// motionless body reads zero (real IMUs would add the gravity vector here).
// ---------------------------------------------------------------------------
inline ImuSequence synthesize_imu(const MotionSequence& motion, const Skeleton& skel, int64_t n = 4,
                                  double noise_std = 0.0, Rng* rng = nullptr) {
  const int64_t T = motion.frames();
  if (T <= 2 * n) throw std::invalid_argument("synthesize_imu: need more than 2n frames");
  if (noise_std > 0.0 && rng == nullptr) throw std::invalid_argument("synthesize_imu: noise requires an rng");

  std::vector<Vec3> pos(T * kNumSensors);
  std::vector<Mat3> rot(T * kNumSensors);
  for (int64_t t = 0; t < T; ++t) {
    FkResult fk = forward_kinematics(skel, motion.poses[t]);
    for (int s = 0; s < kNumSensors; ++s) {
      pos[t * kNumSensors + s] = fk.pos[skel.sensor_joint[s]];
      rot[t * kNumSensors + s] = fk.rot[skel.sensor_joint[s]];
    }
  }

  const double inv_dt2 = (motion.fps / static_cast<double>(n)) * (motion.fps / static_cast<double>(n));
  ImuSequence imu;
  imu.data.assign(T * ImuSequence::kChannels, 0.0);
  for (int64_t t = 0; t < T; ++t) {
    const int64_t tc = std::clamp<int64_t>(t, n, T - n - 1);  // boundaries copy the nearest valid frame
    for (int s = 0; s < kNumSensors; ++s) {
      double* ch = imu.frame(t) + s * 12;
      const Vec3& pm = pos[(tc - n) * kNumSensors + s];
      const Vec3& p0 = pos[tc * kNumSensors + s];
      const Vec3& pp = pos[(tc + n) * kNumSensors + s];
      for (int k = 0; k < 3; ++k) ch[k] = (pm[k] - 2.0 * p0[k] + pp[k]) * inv_dt2;
      const Mat3& r = rot[t * kNumSensors + s];
      for (int k = 0; k < 9; ++k) ch[3 + k] = r[k];
    }
  }

  if (noise_std > 0.0) {
    for (int64_t t = 0; t < T; ++t)
      for (int s = 0; s < kNumSensors; ++s) {
        double* ch = imu.frame(t) + s * 12;
        for (int k = 0; k < 12; ++k) ch[k] += noise_std * rng->normal();
        // restore orthonormality of the rotation block
        Mat3 noisy;
        for (int k = 0; k < 9; ++k) noisy[k] = ch[3 + k];
        Mat3 clean = rot6d_to_matrix({noisy[0], noisy[3], noisy[6], noisy[1], noisy[4], noisy[7]});
        for (int k = 0; k < 9; ++k) ch[3 + k] = clean[k];
      }
  }
  return imu;
}

// Balanced corpus: kinds round-robin, each sequence generated from its own
// derived stream so generation order is irrelevant.
inline Dataset generate_dataset(int64_t num_sequences, uint64_t seed, double noise_std = 0.01) {
  const Skeleton& skel = default_skeleton();
  Rng root(seed);
  Dataset ds;
  ds.seed = seed;
  ds.noise_std = noise_std;
  const auto& kinds = motion_kind_names();
  for (int64_t i = 0; i < num_sequences; ++i) {
    const MotionKind kind = kinds[i % kinds.size()].first;
    Rng child = root.derive(static_cast<uint64_t>(i));
    int64_t length = 0;
    switch (kind) {
      case MotionKind::kStandIdle:
      case MotionKind::kSitIdle:
        length = 160 + static_cast<int64_t>(child.uniform(0.0, 80.0));
        break;
      case MotionKind::kMixed:
        length = 320 + static_cast<int64_t>(child.uniform(0.0, 160.0));
        break;
      default:
        length = 220 + static_cast<int64_t>(child.uniform(0.0, 100.0));
        break;
    }
    SequenceRecord rec;
    rec.kind = to_string(kind);
    rec.motion = generate_motion(kind, length, child);
    rec.imu = synthesize_imu(rec.motion, skel, 4, noise_std, &child);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace imupose
