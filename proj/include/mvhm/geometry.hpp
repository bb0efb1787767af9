#pragma once

#include "mvhm/core.hpp"

#include <algorithm>

namespace mvhm {

constexpr double kParallelTol = 1e-9;

// Wrap to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * M_PI);
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

inline bool near_parallel(const Vec3& u, const Vec3& v, double tol = kParallelTol) {
  return u.cross(v).norm() <= tol * u.norm() * v.norm();
}

// Deterministic unit vector perpendicular to u: rejection of world +z, falling
// back to +x when u is along z. Pins the 180-degree rotation axis choice.
inline Vec3 orthonormal_perp(const Vec3& u) {
  Vec3 uh = u.normalized();
  Vec3 cand = Vec3::UnitZ() - uh.dot(Vec3::UnitZ()) * uh;
  if (cand.norm() <= 1e-9) cand = Vec3::UnitX() - uh.dot(Vec3::UnitX()) * uh;
  cand.normalize();
  cand -= uh.dot(cand) * uh;  // second pass; one projection step can cancel badly
  return cand.normalized();
}

// Smallest rotation taking direction u to direction v (no twist about v).
// Antiparallel inputs use the orthonormal_perp axis, so the result is
// deterministic everywhere.
inline Quat minimal_rotation(const Vec3& u, const Vec3& v) {
  double nu = u.norm(), nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0) || !u.allFinite() || !v.allFinite())
    throw DomainError("minimal_rotation: zero or non-finite direction");
  Vec3 uh = u / nu, vh = v / nv;
  Vec3 h = uh + vh;
  double nh = h.norm();
  if (nh <= 1e-9) {
    Vec3 axis = orthonormal_perp(uh);
    return Quat(0.0, axis.x(), axis.y(), axis.z());
  }
  h /= nh;
  Vec3 im = uh.cross(h);
  return Quat(uh.dot(h), im.x(), im.y(), im.z());
}

inline Quat axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

inline double rotation_angle(const Quat& q) {
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

// Twist component of q about unit axis a, in (-pi, pi].
inline double twist_angle(const Quat& q, const Vec3& a) {
  Vec3 ah = a.normalized();
  double d = q.vec().dot(ah);
  if (d == 0.0 && q.w() == 0.0) return 0.0;  // pure 180-degree swing, no twist
  return wrap_angle(2.0 * std::atan2(d, q.w()));
}

struct SwingTwist {
  Quat swing;
  double twist;  // about the given axis, radians
};

// q == swing * twist(axis, t); swing moves the axis with no rotation about it.
inline SwingTwist swing_twist(const Quat& q, const Vec3& axis) {
  Vec3 ah = axis.normalized();
  double t = twist_angle(q, ah);
  Quat tw = axis_angle(ah, t);
  Quat sw = q * tw.conjugate();
  sw.normalize();
  return {sw, t};
}

// Component of r perpendicular to u, scaled: (u x r) x u. Defines the
// orientation reference used to measure spin. Parallel inputs carry no
// perpendicular information.
inline Vec3 sign_vector(const Vec3& u, const Vec3& r) {
  if (near_parallel(u, r))
    throw DomainError("sign_vector: reference parallel to bone direction");
  return (u.cross(r)).cross(u);
}

// Signed angle from e1 to e2 measured about unit axis (right-handed), (-pi, pi].
// Both vectors must have a nonzero component perpendicular to the axis.
inline double spin_angle(const Vec3& e1, const Vec3& e2, const Vec3& axis) {
  Vec3 ah = axis.normalized();
  Vec3 p1 = e1 - e1.dot(ah) * ah;
  Vec3 p2 = e2 - e2.dot(ah) * ah;
  if (p1.norm() <= kParallelTol * e1.norm() || p2.norm() <= kParallelTol * e2.norm())
    throw DomainError("spin_angle: vector parallel to axis");
  double s = ah.dot(p1.cross(p2));
  double c = p1.dot(p2);
  return std::atan2(s, c);
}

// Distance from p to segment [a, b]; param receives the clamped projection in [0,1].
inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b,
                                     double* param = nullptr) {
  Vec3 ab = b - a;
  double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  if (param) *param = t;
  return (p - (a + t * ab)).norm();
}

// Smoothstep complement on [0,1]: 1 at 0, 0 at 1, C1 at both ends.
inline double cubic_falloff(double q) {
  q = std::clamp(q, 0.0, 1.0);
  return 1.0 - q * q * (3.0 - 2.0 * q);
}

}  // namespace mvhm
