#pragma once

#include "mvhm/geometry.hpp"

#include <array>
#include <string>

namespace mvhm {

// 21-joint hand: wrist = 0, then thumb/index/middle/ring/pinky, four joints per
// finger (root knuckle, PIP, DIP, tip) at 4f+1 .. 4f+4. Bone i ends at joint i;
// bone 0 is a forearm stub whose tail is the wrist. Millimeters throughout.
constexpr int kNumJoints = 21;
constexpr int kNumBones = 21;
constexpr int kNumFingers = 5;
constexpr std::array<int, 5> kFingerRoots = {1, 5, 9, 13, 17};

inline bool is_finger_root(int bone) { return bone % 4 == 1; }

// Joint index whose position is the head of bone i.
inline int chain_parent(int joint) {
  if (joint <= 0) return -1;
  return is_finger_root(joint) ? 0 : joint - 1;
}

constexpr std::array<const char*, kNumJoints> kJointNames = {
    "wrist",
    "thumb_root",  "thumb_pip",  "thumb_dip",  "thumb_tip",
    "index_root",  "index_pip",  "index_dip",  "index_tip",
    "middle_root", "middle_pip", "middle_dip", "middle_tip",
    "ring_root",   "ring_pip",   "ring_dip",   "ring_tip",
    "pinky_root",  "pinky_pip",  "pinky_dip",  "pinky_tip",
};

// Flat open right hand, palm facing +z, fingers fanning around +y, wrist at the
// origin. Each finger is a straight ray: joints sit at direction * station, so
// the four bones of a finger are exactly collinear at rest. That collinearity is
// what makes equal propagated spins compose with minimal swings into a single
// rigid rotation per finger.
struct RestTable {
  std::array<Vec3, kNumFingers> dir;
  std::array<std::array<double, 4>, kNumFingers> station;  // mm from wrist
};

inline const RestTable& rest_table() {
  static const RestTable t = [] {
    RestTable r;
    // Fan angles from +y in the palm plane: thumb 40, index 15, middle 0,
    // ring -12, pinky -25 degrees.
    const double deg = M_PI / 180.0;
    const std::array<double, 5> fan = {40.0 * deg, 15.0 * deg, 0.0, -12.0 * deg,
                                       -25.0 * deg};
    r.station = {{{45, 85, 117, 145},
                  {85, 130, 155, 178},
                  {88, 138, 166, 191},
                  {82, 128, 154, 176},
                  {74, 106, 126, 143}}};
    for (int f = 0; f < 5; ++f)
      r.dir[f] = Vec3(std::sin(fan[f]), std::cos(fan[f]), 0.0);
    return r;
  }();
  return t;
}

inline Vec3 rest_joint(int joint) {
  if (joint == 0) return Vec3::Zero();
  int f = (joint - 1) / 4, s = (joint - 1) % 4;
  const RestTable& t = rest_table();
  return t.dir[f] * t.station[f][s];
}

using KeypointSet = std::array<Vec3, kNumJoints>;

inline KeypointSet rest_keypoints() {
  KeypointSet c;
  for (int i = 0; i < kNumJoints; ++i) c[i] = rest_joint(i);
  return c;
}

// 7-DoF bone: 3 head + 3 tail + 1 spin (rotation about its own axis).
struct Bone {
  int parent = -1;
  Vec3 head = Vec3::Zero();
  Vec3 tail = Vec3::Zero();
  double spin = 0.0;
};

struct Skeleton {
  std::array<Bone, kNumBones> bones;
};

constexpr double kForearmLength = 80.0;  // bone 0 head sits this far along -y

inline Skeleton rest_skeleton() {
  Skeleton s;
  s.bones[0].parent = -1;
  s.bones[0].head = Vec3(0.0, -kForearmLength, 0.0);
  s.bones[0].tail = Vec3::Zero();
  for (int i = 1; i < kNumBones; ++i) {
    Bone& b = s.bones[i];
    b.parent = is_finger_root(i) ? 0 : i - 1;
    b.head = rest_joint(chain_parent(i));
    b.tail = rest_joint(i);
  }
  return s;
}

inline Vec3 bone_vector(const Skeleton& s, int i) {
  return s.bones[i].tail - s.bones[i].head;
}

inline double bone_length(const Skeleton& s, int i) { return bone_vector(s, i).norm(); }

inline void validate_skeleton(const Skeleton& s) {
  for (int i = 0; i < kNumBones; ++i) {
    const Bone& b = s.bones[i];
    if (!b.head.allFinite() || !b.tail.allFinite() || !std::isfinite(b.spin))
      throw DomainError("skeleton: non-finite bone " + std::to_string(i));
    if (bone_length(s, i) <= 0.0)
      throw DomainError("skeleton: degenerate bone " + std::to_string(i));
    if (i > 0) {
      const Bone& p = s.bones[b.parent];
      if ((b.head - p.tail).norm() > 1e-9)
        throw DomainError("skeleton: bone " + std::to_string(i) +
                          " detached from parent");
    }
  }
}

// Reads keypoints off a posed skeleton (joint i = tail of bone i).
inline KeypointSet forward_kinematics(const Skeleton& s) {
  KeypointSet c;
  for (int i = 0; i < kNumBones; ++i) c[i] = s.bones[i].tail;
  return c;
}

// --- articulation ----------------------------------------------------------

// Joint angles for one finger, radians. Abduction rotates in the palm plane,
// flexion curls toward the palm normal, twist spins about the finger axis.
struct FingerAngles {
  double root_abduction = 0, root_flexion = 0, root_twist = 0;
  double mcp_abduction = 0, mcp_flexion = 0;
  double pip_flexion = 0, dip_flexion = 0;
};

struct HandPose {
  Quat global_rotation = Quat::Identity();
  Vec3 global_translation = Vec3::Zero();
  std::array<FingerAngles, kNumFingers> fingers;
};

struct ArticulatedPose {
  Skeleton skeleton;
  std::array<Quat, kNumBones> rotations;  // true world rotation of each bone
};

// Poses the rest skeleton hierarchically, so segment lengths are preserved
// exactly. Local rotations are defined about rest-frame axes (palm normal +z
// for abduction, u x z for flexion, the finger ray u for twist).
inline ArticulatedPose articulate(const HandPose& pose) {
  const Skeleton rest = rest_skeleton();
  const RestTable& table = rest_table();
  ArticulatedPose out;
  out.skeleton = rest;
  const Quat G = pose.global_rotation.normalized();
  const Vec3 T = pose.global_translation;

  auto place = [&](int i, const Quat& world, const Vec3& head_world) {
    Bone& b = out.skeleton.bones[i];
    Vec3 rest_vec = rest.bones[i].tail - rest.bones[i].head;
    b.head = head_world;
    b.tail = head_world + world * rest_vec;
    b.spin = twist_angle(world, rest_vec);
    out.rotations[i] = world;
  };

  place(0, G, G * rest.bones[0].head + T);

  for (int f = 0; f < kNumFingers; ++f) {
    const FingerAngles& a = pose.fingers[f];
    const Vec3 u = table.dir[f];
    const Vec3 flex_axis = u.cross(Vec3::UnitZ());
    const Quat abd = axis_angle(Vec3::UnitZ(), a.root_abduction);
    const Quat flex = axis_angle(flex_axis, a.root_flexion);
    const Quat twist = axis_angle(u, a.root_twist);

    int root = kFingerRoots[f];
    Quat w_root = G * abd * flex * twist;
    place(root, w_root, out.skeleton.bones[0].tail);

    Quat w_mcp = w_root * axis_angle(Vec3::UnitZ(), a.mcp_abduction) *
                 axis_angle(flex_axis, a.mcp_flexion);
    place(root + 1, w_mcp, out.skeleton.bones[root].tail);

    Quat w_pip = w_mcp * axis_angle(flex_axis, a.pip_flexion);
    place(root + 2, w_pip, out.skeleton.bones[root + 1].tail);

    Quat w_dip = w_pip * axis_angle(flex_axis, a.dip_flexion);
    place(root + 3, w_dip, out.skeleton.bones[root + 2].tail);
  }
  return out;
}

// --- sampling --------------------------------------------------------------

struct Range {
  double lo = 0, hi = 0;
};

struct FingerLimits {
  Range root_abduction, root_flexion, root_twist;
  Range mcp_abduction, mcp_flexion, pip_flexion, dip_flexion;
};

struct PoseLimits {
  Range global_angle;
  Range tx, ty, tz;
  std::array<FingerLimits, kNumFingers> fingers;
};

inline PoseLimits default_pose_limits() {
  const double d = M_PI / 180.0;
  PoseLimits lim;
  lim.global_angle = {0.0, M_PI};
  lim.tx = {-30.0, 30.0};
  lim.ty = {-30.0, 30.0};
  lim.tz = {-30.0, 30.0};
  for (int f = 0; f < kNumFingers; ++f) {
    FingerLimits& fl = lim.fingers[f];
    double abd = (f == 0) ? 20.0 : 8.0;
    fl.root_abduction = {-abd * d, abd * d};
    fl.root_flexion = {(f == 0 ? -10.0 : -4.0) * d, (f == 0 ? 35.0 : 10.0) * d};
    fl.root_twist = {-15.0 * d, 15.0 * d};
    fl.mcp_abduction = {-10.0 * d, 10.0 * d};
    fl.mcp_flexion = {-10.0 * d, 80.0 * d};
    fl.pip_flexion = {0.0, 95.0 * d};
    fl.dip_flexion = {0.0, 70.0 * d};
  }
  return lim;
}

inline void validate_limits(const PoseLimits& lim) {
  auto chk = [](const Range& r, const char* what) {
    if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
      throw ConfigError(std::string("pose limits: invalid range for ") + what);
  };
  chk(lim.global_angle, "global_angle");
  chk(lim.tx, "tx");
  chk(lim.ty, "ty");
  chk(lim.tz, "tz");
  for (const FingerLimits& f : lim.fingers) {
    chk(f.root_abduction, "root_abduction");
    chk(f.root_flexion, "root_flexion");
    chk(f.root_twist, "root_twist");
    chk(f.mcp_abduction, "mcp_abduction");
    chk(f.mcp_flexion, "mcp_flexion");
    chk(f.pip_flexion, "pip_flexion");
    chk(f.dip_flexion, "dip_flexion");
  }
}

// Draw order is fixed (axis, angle, translation, then 7 angles per finger in
// index order); changing it would silently change every derived dataset.
inline HandPose sample_pose(Rng& rng, const PoseLimits& lim) {
  validate_limits(lim);
  HandPose p;
  Vec3 axis = rng.unit_vector();
  double angle = rng.uniform(lim.global_angle.lo, lim.global_angle.hi);
  p.global_rotation = axis_angle(axis, angle);
  p.global_translation = Vec3(rng.uniform(lim.tx.lo, lim.tx.hi),
                              rng.uniform(lim.ty.lo, lim.ty.hi),
                              rng.uniform(lim.tz.lo, lim.tz.hi));
  for (int f = 0; f < kNumFingers; ++f) {
    FingerAngles& a = p.fingers[f];
    const FingerLimits& fl = lim.fingers[f];
    a.root_abduction = rng.uniform(fl.root_abduction.lo, fl.root_abduction.hi);
    a.root_flexion = rng.uniform(fl.root_flexion.lo, fl.root_flexion.hi);
    a.root_twist = rng.uniform(fl.root_twist.lo, fl.root_twist.hi);
    a.mcp_abduction = rng.uniform(fl.mcp_abduction.lo, fl.mcp_abduction.hi);
    a.mcp_flexion = rng.uniform(fl.mcp_flexion.lo, fl.mcp_flexion.hi);
    a.pip_flexion = rng.uniform(fl.pip_flexion.lo, fl.pip_flexion.hi);
    a.dip_flexion = rng.uniform(fl.dip_flexion.lo, fl.dip_flexion.hi);
  }
  return p;
}

inline KeypointSet sample_keypoints(Rng& rng, const PoseLimits& lim) {
  return forward_kinematics(articulate(sample_pose(rng, lim)).skeleton);
}

}  // namespace mvhm
