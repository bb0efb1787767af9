#pragma once

#include "mvhm/skeleton.hpp"

#include <Eigen/Eigenvalues>

#include <vector>

namespace mvhm {

// Pinhole, computer-vision axes: x right, y down, z forward (into the scene).
// Pixel (row i, col j) covers the unit square centered at (j + 0.5, i + 0.5).
struct Intrinsics {
  double fx = 480.0, fy = 480.0;
  double cx = 128.0, cy = 128.0;
  int width = 256, height = 256;
};

inline Intrinsics default_intrinsics(int resolution = 256) {
  if (resolution <= 0) throw ConfigError("resolution must be positive");
  double s = resolution / 256.0;
  return {480.0 * s, 480.0 * s, resolution / 2.0, resolution / 2.0, resolution,
          resolution};
}

// World-to-camera: x_cam = R * x_world + t.
struct Extrinsics {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 to_camera(const Vec3& p) const { return R * p + t; }
  Vec3 center() const { return -(R.transpose() * t); }
};

// Camera at eye looking at target. up_hint fixes the roll: image "up" is the
// hint direction (so +y in the image runs opposite to it). A hint parallel to
// the view direction falls back to world +z, then +y.
inline Extrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
  Vec3 f = target - eye;
  if (f.norm() <= 0.0) throw DomainError("look_at: eye coincides with target");
  f.normalize();
  Vec3 up = up_hint;
  auto usable = [&](const Vec3& u) {
    return (u - u.dot(f) * f).norm() > 1e-9 * u.norm() && u.norm() > 0.0;
  };
  if (!usable(up)) up = Vec3::UnitZ();
  if (!usable(up)) up = Vec3::UnitY();
  Vec3 y = -(up - up.dot(f) * f).normalized();  // image y runs downward
  Vec3 x = y.cross(f);
  Extrinsics e;
  e.R.row(0) = x;
  e.R.row(1) = y;
  e.R.row(2) = f;
  e.t = -(e.R * eye);
  return e;
}

// `count` cameras evenly spaced on a circle of radius `radius` in the plane
// through `target` perpendicular to `axis`, all aimed at the target with the
// axis as shared up-hint.
inline std::vector<Extrinsics> build_ring(const Vec3& target, const Vec3& axis,
                                          double radius, int count) {
  if (count < 1) throw ConfigError("camera ring needs at least one camera");
  if (!(radius > 0.0)) throw ConfigError("camera ring radius must be positive");
  if (axis.norm() <= 0.0) throw DomainError("camera ring axis must be nonzero");
  Vec3 a = axis.normalized();
  Vec3 e1 = orthonormal_perp(a);
  Vec3 e2 = a.cross(e1);
  std::vector<Extrinsics> views;
  views.reserve(count);
  for (int k = 0; k < count; ++k) {
    double th = 2.0 * M_PI * k / count;
    Vec3 eye = target + radius * (std::cos(th) * e1 + std::sin(th) * e2);
    views.push_back(look_at(eye, target, a));
  }
  return views;
}

inline Vec2 project(const Intrinsics& K, const Extrinsics& E, const Vec3& p,
                    double* depth = nullptr) {
  Vec3 pc = E.to_camera(p);
  if (pc.z() <= 0.0) throw DomainError("project: point not in front of camera");
  if (depth) *depth = pc.z();
  return Vec2(K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy);
}

inline Vec3 unproject(const Intrinsics& K, const Extrinsics& E, const Vec2& uv,
                      double depth) {
  if (!(depth > 0.0)) throw DomainError("unproject: depth must be positive");
  Vec3 pc((uv.x() - K.cx) / K.fx * depth, (uv.y() - K.cy) / K.fy * depth, depth);
  return E.R.transpose() * (pc - E.t);
}

struct Observation {
  Intrinsics intr;
  Extrinsics extr;
  Vec2 uv;
};

// Direct linear triangulation. Rows are built from intrinsics-normalized rays
// (well-conditioned for the single-point case), stacked into a 4x4 normal
// matrix whose smallest eigenvector is the homogeneous point.
inline Vec3 triangulate(const std::vector<Observation>& obs) {
  if (obs.size() < 2)
    throw TriangulationError("triangulation needs at least two observations");
  double max_center_sep = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = i + 1; j < obs.size(); ++j)
      max_center_sep = std::max(
          max_center_sep,
          (obs[i].extr.center() - obs[j].extr.center()).norm());
  if (max_center_sep <= 1e-9)
    throw TriangulationError("observations share one camera center");

  Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
  for (const Observation& o : obs) {
    double xn = (o.uv.x() - o.intr.cx) / o.intr.fx;
    double yn = (o.uv.y() - o.intr.cy) / o.intr.fy;
    Eigen::Matrix<double, 3, 4> P;
    P.leftCols<3>() = o.extr.R;
    P.col(3) = o.extr.t;
    Eigen::RowVector4d r0 = xn * P.row(2) - P.row(0);
    Eigen::RowVector4d r1 = yn * P.row(2) - P.row(1);
    r0.normalize();
    r1.normalize();
    M += r0.transpose() * r0 + r1.transpose() * r1;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(M);
  Eigen::Vector4d X = es.eigenvectors().col(0);  // smallest eigenvalue
  if (std::abs(X(3)) <= 1e-12 * X.head<3>().norm())
    throw TriangulationError("rays are parallel; no finite intersection");
  return X.head<3>() / X(3);
}

}  // namespace mvhm
