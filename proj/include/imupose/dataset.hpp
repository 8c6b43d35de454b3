#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "imupose/kinematics.hpp"

namespace imupose {

struct TextLabel {
  enum class Level { kSequence, kFrame };
  std::string text;
  int64_t start_frame = 0;
  int64_t end_frame = 0;  // inclusive span end
  Level level = Level::kSequence;
};

inline const char* to_string(TextLabel::Level lv) {
  return lv == TextLabel::Level::kSequence ? "sequence" : "frame";
}

inline TextLabel::Level label_level_from_string(const std::string& s) {
  if (s == "sequence") return TextLabel::Level::kSequence;
  if (s == "frame") return TextLabel::Level::kFrame;
  throw std::invalid_argument("unknown label level '" + s + "'");
}

struct MotionSequence {
  double fps = kFps;
  std::vector<Pose> poses;
  std::vector<TextLabel> labels;

  int64_t frames() const { return static_cast<int64_t>(poses.size()); }
};

// Per-frame readings of 6 sensors x (3 acceleration + 9 rotation, row-major).
struct ImuSequence {
  static constexpr int64_t kChannels = kNumSensors * 12;
  std::vector<double> data;  // frames x 72

  int64_t frames() const { return static_cast<int64_t>(data.size()) / kChannels; }
  double* frame(int64_t t) { return data.data() + t * kChannels; }
  const double* frame(int64_t t) const { return data.data() + t * kChannels; }
};

struct SequenceRecord {
  std::string kind;
  MotionSequence motion;
  ImuSequence imu;
};

struct Dataset {
  static constexpr int kFormatVersion = 1;
  uint64_t seed = 0;
  double noise_std = 0.0;
  std::vector<SequenceRecord> records;
};

// ---------------------------------------------------------------------------
// Ground-truth targets for one 80-frame window: q (local 6D rotations),
// p (root-relative joint positions), s (root velocity by central difference).
// ---------------------------------------------------------------------------
struct WindowTargets {
  int64_t frames = 0;
  std::vector<double> q;  // T x 15 x 6
  std::vector<double> p;  // T x 15 x 3
  std::vector<double> s;  // T x 3
};

inline WindowTargets build_targets(const MotionSequence& motion, const Skeleton& skel, int64_t t0, int64_t len) {
  if (t0 < 0 || t0 + len > motion.frames()) throw std::invalid_argument("build_targets: window out of range");
  WindowTargets out;
  out.frames = len;
  out.q.resize(len * kNumJoints * 6);
  out.p.resize(len * kNumJoints * 3);
  out.s.resize(len * 3);
  const double fps = motion.fps;
  for (int64_t t = 0; t < len; ++t) {
    const Pose& pose = motion.poses[t0 + t];
    FkResult fk = forward_kinematics(skel, pose);
    for (int j = 0; j < kNumJoints; ++j) {
      for (int k = 0; k < 6; ++k) out.q[(t * kNumJoints + j) * 6 + k] = pose.local_rot6d[j][k];
      Vec3 rel = fk.pos[j] - fk.pos[kPelvis];
      for (int k = 0; k < 3; ++k) out.p[(t * kNumJoints + j) * 3 + k] = rel[k];
    }
    // central difference on the full sequence, one-sided at its ends
    const int64_t g = t0 + t;
    const int64_t lo = std::max<int64_t>(g - 1, 0);
    const int64_t hi = std::min<int64_t>(g + 1, motion.frames() - 1);
    const Vec3 v = (fps / static_cast<double>(hi - lo)) * (motion.poses[hi].root_pos - motion.poses[lo].root_pos);
    for (int k = 0; k < 3; ++k) out.s[t * 3 + k] = v[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON serialization. nlohmann emits shortest round-trip decimals, so the
// save/load cycle is lossless to the last bit for finite doubles.
// ---------------------------------------------------------------------------
namespace detail {

inline nlohmann::json label_to_json(const TextLabel& l) {
  return {{"text", l.text}, {"start", l.start_frame}, {"end", l.end_frame}, {"level", to_string(l.level)}};
}

inline TextLabel label_from_json(const nlohmann::json& j) {
  TextLabel l;
  l.text = j.at("text").get<std::string>();
  l.start_frame = j.at("start").get<int64_t>();
  l.end_frame = j.at("end").get<int64_t>();
  l.level = label_level_from_string(j.at("level").get<std::string>());
  if (l.start_frame > l.end_frame) throw std::invalid_argument("label span inverted for '" + l.text + "'");
  return l;
}

}  // namespace detail

inline nlohmann::json skeleton_to_json(const Skeleton& s) {
  nlohmann::json j;
  j["version"] = 1;
  j["joints"] = s.joints;
  j["parents"] = s.parent;
  for (const auto& o : s.offset) j["offsets"].push_back(o);
  j["sensors"] = nlohmann::json::object();
  for (int i = 0; i < kNumSensors; ++i) j["sensors"][s.sensor_names[i]] = s.sensor_joint[i];
  return j;
}

inline Skeleton skeleton_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw std::runtime_error("skeleton: unsupported version");
  Skeleton s;
  const auto& joints = j.at("joints");
  if (joints.size() != kNumJoints) throw std::runtime_error("skeleton: expected 15 joints");
  for (int i = 0; i < kNumJoints; ++i) {
    s.joints[i] = joints[i].get<std::string>();
    s.parent[i] = j.at("parents")[i].get<int>();
    for (int k = 0; k < 3; ++k) s.offset[i][k] = j.at("offsets")[i][k].get<double>();
  }
  const auto& sensors = j.at("sensors");
  if (sensors.size() != kNumSensors) throw std::runtime_error("skeleton: expected 6 sensors");
  const Skeleton& ref = default_skeleton();
  for (int i = 0; i < kNumSensors; ++i) {
    s.sensor_names[i] = ref.sensor_names[i];
    s.sensor_joint[i] = sensors.at(ref.sensor_names[i]).get<int>();
  }
  s.validate();
  return s;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  nlohmann::json j;
  j["version"] = Dataset::kFormatVersion;
  j["metadata"] = {{"seed", ds.seed}, {"noise_std", ds.noise_std}};
  j["sequences"] = nlohmann::json::array();
  for (const auto& rec : ds.records) {
    nlohmann::json js;
    js["kind"] = rec.kind;
    js["fps"] = rec.motion.fps;
    js["labels"] = nlohmann::json::array();
    for (const auto& l : rec.motion.labels) js["labels"].push_back(detail::label_to_json(l));
    nlohmann::json poses = nlohmann::json::array();
    nlohmann::json roots = nlohmann::json::array();
    for (const auto& pose : rec.motion.poses) {
      nlohmann::json pj = nlohmann::json::array();
      for (const auto& r : pose.local_rot6d) pj.push_back(r);
      poses.push_back(std::move(pj));
      roots.push_back(pose.root_pos);
    }
    js["rot6d"] = std::move(poses);
    js["root_pos"] = std::move(roots);
    nlohmann::json imu = nlohmann::json::array();
    for (int64_t t = 0; t < rec.imu.frames(); ++t) {
      nlohmann::json ft = nlohmann::json::array();
      for (int s = 0; s < kNumSensors; ++s) {
        const double* ch = rec.imu.frame(t) + s * 12;
        ft.push_back(std::vector<double>(ch, ch + 12));
      }
      imu.push_back(std::move(ft));
    }
    js["imu"] = std::move(imu);
    j["sequences"].push_back(std::move(js));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open '" + path + "' for writing");
  out << j.dump();
  if (!out) throw std::runtime_error("save_dataset: write failed for '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("load_dataset: parse error in '" + path + "' at byte " + std::to_string(e.byte) + ": " +
                             e.what());
  }
  const int version = j.at("version").get<int>();
  if (version != Dataset::kFormatVersion)
    throw std::runtime_error("load_dataset: format version " + std::to_string(version) + " unsupported (expected " +
                             std::to_string(Dataset::kFormatVersion) + ")");
  Dataset ds;
  ds.seed = j.at("metadata").at("seed").get<uint64_t>();
  ds.noise_std = j.at("metadata").at("noise_std").get<double>();
  for (const auto& js : j.at("sequences")) {
    SequenceRecord rec;
    rec.kind = js.at("kind").get<std::string>();
    rec.motion.fps = js.at("fps").get<double>();
    for (const auto& lj : js.at("labels")) rec.motion.labels.push_back(detail::label_from_json(lj));
    const auto& poses = js.at("rot6d");
    const auto& roots = js.at("root_pos");
    if (poses.size() != roots.size()) throw std::runtime_error("load_dataset: pose/root length mismatch");
    rec.motion.poses.resize(poses.size());
    for (size_t t = 0; t < poses.size(); ++t) {
      for (int jt = 0; jt < kNumJoints; ++jt)
        for (int k = 0; k < 6; ++k) rec.motion.poses[t].local_rot6d[jt][k] = poses[t][jt][k].get<double>();
      for (int k = 0; k < 3; ++k) rec.motion.poses[t].root_pos[k] = roots[t][k].get<double>();
    }
    const auto& imu = js.at("imu");
    if (imu.size() != poses.size()) throw std::runtime_error("load_dataset: motion/imu length mismatch");
    rec.imu.data.resize(imu.size() * ImuSequence::kChannels);
    for (size_t t = 0; t < imu.size(); ++t)
      for (int s = 0; s < kNumSensors; ++s)
        for (int k = 0; k < 12; ++k) rec.imu.data[t * ImuSequence::kChannels + s * 12 + k] = imu[t][s][k].get<double>();
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace imupose
