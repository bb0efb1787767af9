#pragma once

#include "mvhm/skeleton.hpp"

#include <vector>

namespace mvhm {

// Pose recovered from keypoints alone: per-bone minimal swing plus a spin
// angle about the posed bone axis. Full bone rotation = twist(posed axis,
// spin) * swing; bone 0 is translation-only.
struct SpinSolution {
  Skeleton rest;
  Skeleton posed;  // heads/tails snapped to the input keypoints
  std::array<Quat, kNumBones> swing;
  std::array<double, kNumBones> spin;
  bool used_fallback_reference = false;

  Quat bone_rotation(int i) const {
    if (i == 0) return Quat::Identity();
    Vec3 v = posed.bones[i].tail - posed.bones[i].head;
    return axis_angle(v, spin[i]) * swing[i];
  }
};

// Worst relative segment-length mismatch between target keypoints and the rest
// skeleton. Throws ReachabilityError above tol; the message names the worst bone.
inline double check_reachability(const Skeleton& rest, const KeypointSet& c,
                                 double tol) {
  double worst = 0.0;
  int worst_bone = -1;
  for (int i = 1; i < kNumBones; ++i) {
    double want = bone_length(rest, i);
    double have = (c[i] - c[chain_parent(i)]).norm();
    double rel = std::abs(have - want) / want;
    if (rel > worst) {
      worst = rel;
      worst_bone = i;
    }
  }
  if (worst > tol)
    throw ReachabilityError(
        "keypoints not reachable: bone " + std::to_string(worst_bone) + " (" +
        kJointNames[worst_bone] + ") segment length off by " + g9(worst * 100.0) +
        "% (tolerance " + g9(tol * 100.0) + "%)");
  return worst;
}

namespace detail {

// Reference finger-root for measuring a root bone's spin: the neighboring
// finger, pinky falling back to ring. Degenerate (parallel) references advance
// through the remaining roots.
inline std::vector<int> reference_candidates(int root) {
  std::vector<int> out;
  out.push_back(root == 17 ? root - 4 : root + 4);
  for (int r : kFingerRoots)
    if (r != root && r != out[0]) out.push_back(r);
  return out;
}

}  // namespace detail

// Recovers a 7-DoF-per-bone pose from 21 keypoints. Finger-root spins are
// measured against a neighboring finger's direction, transported by the swing;
// every non-root bone inherits its parent's spin verbatim, so a finger that is
// straight in both rest and target poses moves rigidly.
inline SpinSolution spin_match(const Skeleton& rest, const KeypointSet& c,
                               double tol = 1e-3) {
  for (const Vec3& p : c)
    if (!p.allFinite()) throw DomainError("spin_match: non-finite keypoint");
  validate_skeleton(rest);
  check_reachability(rest, c, tol);

  SpinSolution sol;
  sol.rest = rest;
  sol.posed = rest;
  sol.swing.fill(Quat::Identity());
  sol.spin.fill(0.0);

  // Bone 0 is carried by translation only.
  Vec3 shift = c[0] - rest.bones[0].tail;
  sol.posed.bones[0].head = rest.bones[0].head + shift;
  sol.posed.bones[0].tail = c[0];
  sol.posed.bones[0].spin = 0.0;

  const double kDegenerate = 1e-7;

  for (int root : kFingerRoots) {
    Vec3 u = bone_vector(rest, root);
    Vec3 v = c[root] - c[0];
    Quat s = minimal_rotation(u, v);

    double theta = 0.0;
    bool found = false;
    bool primary = true;
    for (int ref : detail::reference_candidates(root)) {
      Vec3 ref_ori = bone_vector(rest, ref);
      Vec3 ref_aft = c[ref] - c[0];
      if (near_parallel(u, ref_ori, kDegenerate) ||
          near_parallel(v, ref_aft, kDegenerate)) {
        primary = false;
        continue;
      }
      Vec3 e1 = sign_vector(u, ref_ori);
      Vec3 e2 = sign_vector(v, ref_aft);
      theta = spin_angle(s * e1, e2, v);
      found = true;
      if (!primary) sol.used_fallback_reference = true;
      break;
    }
    if (!found)
      throw DomainError("spin_match: all spin references degenerate for bone " +
                        std::to_string(root));

    sol.swing[root] = s;
    sol.spin[root] = theta;
  }

  for (int i = 1; i < kNumBones; ++i) {
    if (!is_finger_root(i)) {
      Vec3 u = bone_vector(rest, i);
      Vec3 v = c[i] - c[i - 1];
      sol.swing[i] = minimal_rotation(u, v);
      sol.spin[i] = sol.spin[i - 1];  // exact copy, by construction
    }
    Bone& b = sol.posed.bones[i];
    b.head = c[chain_parent(i)];
    b.tail = c[i];
    b.spin = sol.spin[i];
  }
  return sol;
}

// Rebuilds keypoints from the recovered rotations alone (rest geometry chained
// through bone_rotation), rather than reading the stored posed skeleton. This
// is the round-trip the solver has to earn.
inline KeypointSet reconstruct_keypoints(const SpinSolution& sol) {
  KeypointSet out;
  out[0] = sol.posed.bones[0].tail;
  for (int i = 1; i < kNumBones; ++i) {
    Vec3 u = bone_vector(sol.rest, i);
    out[i] = out[chain_parent(i)] + sol.bone_rotation(i) * u;
  }
  return out;
}

// Decomposes one rigid motion (R, t) onto every bone, so the skinned mesh
// reproduces R exactly. Used to pose without running the keypoint solver.
inline SpinSolution rigid_solution(const Skeleton& rest, const Quat& R,
                                   const Vec3& t) {
  SpinSolution sol;
  sol.rest = rest;
  sol.posed = rest;
  sol.swing.fill(Quat::Identity());
  sol.spin.fill(0.0);
  for (int i = 0; i < kNumBones; ++i) {
    Bone& b = sol.posed.bones[i];
    b.head = R * rest.bones[i].head + t;
    b.tail = R * rest.bones[i].tail + t;
    if (i == 0) continue;
    Vec3 u = bone_vector(rest, i);
    SwingTwist st = swing_twist(R, u);
    sol.swing[i] = st.swing;
    sol.spin[i] = st.twist;
    b.spin = st.twist;
  }
  return sol;
}

}  // namespace mvhm
