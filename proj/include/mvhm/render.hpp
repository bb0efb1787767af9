#pragma once

#include "mvhm/camera.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <vector>

namespace mvhm {

struct Light {
  Vec3 to_light = Vec3(0, 0, 1);  // unit vector from surface toward the light
  double intensity = 1.0;
};

struct RenderBuffers {
  int width = 0, height = 0;
  std::vector<std::array<std::uint8_t, 3>> rgb;  // row-major
  std::vector<double> depth;                     // mm; 0 = background
  std::vector<std::uint8_t> mask;                // 255 = surface

  std::size_t at(int row, int col) const {
    return static_cast<std::size_t>(row) * width + col;
  }
};

struct RenderOptions {
  std::array<double, 3> albedo = {0.85, 0.62, 0.48};
  std::array<std::uint8_t, 3> background = {0, 0, 0};
  double near_clip = 10.0;   // mm
  double far_clip = 5000.0;  // mm
};

// Flat-shaded Lambertian rasterizer with a z-buffer. Coverage is decided by
// edge functions evaluated at pixel centers; depth is perspective-correct via
// 1/z interpolation. Triangles with any vertex at or behind the near plane are
// dropped whole (scenes here keep the subject far from the camera). Depth ties
// keep the earlier face, so output is deterministic for a fixed face order.
inline RenderBuffers render_mesh(const std::vector<Vec3>& vertices,
                                 const std::vector<std::array<int, 3>>& faces,
                                 const Intrinsics& K, const Extrinsics& E,
                                 const Light& light,
                                 const RenderOptions& opt = RenderOptions()) {
  if (!(light.intensity >= 0.0)) throw DomainError("light intensity must be >= 0");
  RenderBuffers out;
  out.width = K.width;
  out.height = K.height;
  const std::size_t npx = static_cast<std::size_t>(K.width) * K.height;
  out.rgb.assign(npx, opt.background);
  out.depth.assign(npx, 0.0);
  out.mask.assign(npx, 0);
  std::vector<double> zbuf(npx, std::numeric_limits<double>::infinity());

  std::vector<Vec3> cam(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i)
    cam[i] = E.to_camera(vertices[i]);

  const Vec3 l = light.to_light.normalized();

  for (const auto& f : faces) {
    const Vec3 &a = cam[f[0]], &b = cam[f[1]], &c = cam[f[2]];
    if (a.z() <= opt.near_clip || b.z() <= opt.near_clip || c.z() <= opt.near_clip)
      continue;

    auto to_px = [&](const Vec3& p) {
      return Vec2(K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy);
    };
    Vec2 pa = to_px(a), pb = to_px(b), pc2 = to_px(c);

    double area = (pb.x() - pa.x()) * (pc2.y() - pa.y()) -
                  (pb.y() - pa.y()) * (pc2.x() - pa.x());
    if (area == 0.0) continue;

    // World-space geometric normal; winding gives outward normals.
    Vec3 nw = (vertices[f[1]] - vertices[f[0]])
                  .cross(vertices[f[2]] - vertices[f[0]]);
    double nn = nw.norm();
    if (nn == 0.0) continue;
    double lambert = std::max(0.0, nw.dot(l) / nn) * light.intensity;
    std::array<std::uint8_t, 3> shade;
    for (int ch = 0; ch < 3; ++ch) {
      double v = std::min(1.0, lambert * opt.albedo[ch]);
      shade[ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }

    int col0 = std::max(0, static_cast<int>(std::floor(
                               std::min({pa.x(), pb.x(), pc2.x()}) - 0.5)));
    int col1 = std::min(K.width - 1, static_cast<int>(std::ceil(
                                         std::max({pa.x(), pb.x(), pc2.x()}))));
    int row0 = std::max(0, static_cast<int>(std::floor(
                               std::min({pa.y(), pb.y(), pc2.y()}) - 0.5)));
    int row1 = std::min(K.height - 1, static_cast<int>(std::ceil(
                                          std::max({pa.y(), pb.y(), pc2.y()}))));

    auto edge = [](const Vec2& p, const Vec2& q, double x, double y) {
      return (q.x() - p.x()) * (y - p.y()) - (q.y() - p.y()) * (x - p.x());
    };

    for (int row = row0; row <= row1; ++row) {
      double y = row + 0.5;
      for (int col = col0; col <= col1; ++col) {
        double x = col + 0.5;
        double w0 = edge(pb, pc2, x, y);
        double w1 = edge(pc2, pa, x, y);
        double w2 = edge(pa, pb, x, y);
        bool inside = area > 0.0 ? (w0 >= 0 && w1 >= 0 && w2 >= 0)
                                 : (w0 <= 0 && w1 <= 0 && w2 <= 0);
        if (!inside) continue;
        double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
        double inv_z = l0 / a.z() + l1 / b.z() + l2 / c.z();
        if (inv_z <= 0.0) continue;
        double z = 1.0 / inv_z;
        if (z > opt.far_clip) continue;
        std::size_t px = out.at(row, col);
        if (z < zbuf[px]) {
          zbuf[px] = z;
          out.depth[px] = z;
          out.rgb[px] = shade;
          out.mask[px] = 255;
        }
      }
    }
  }
  return out;
}

// --- keypoint heatmaps ------------------------------------------------------

// One channel per keypoint: exp(-d^2 / 2 sigma^2) sampled at pixel centers,
// unnormalized (value 1 at the keypoint itself).
inline std::vector<std::vector<double>> render_heatmaps(
    const std::vector<Vec2>& keypoints, int width, int height, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("heatmap sigma must be positive");
  if (width <= 0 || height <= 0) throw DomainError("heatmap size must be positive");
  std::vector<std::vector<double>> maps;
  maps.reserve(keypoints.size());
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const Vec2& kp : keypoints) {
    std::vector<double> m(static_cast<std::size_t>(width) * height);
    for (int row = 0; row < height; ++row)
      for (int col = 0; col < width; ++col) {
        double dx = (col + 0.5) - kp.x();
        double dy = (row + 0.5) - kp.y();
        m[static_cast<std::size_t>(row) * width + col] =
            std::exp(-(dx * dx + dy * dy) * inv);
      }
    maps.push_back(std::move(m));
  }
  return maps;
}

struct Peak {
  bool found = false;
  double u = 0, v = 0;  // continuous pixel coordinates
  double value = 0;
};

// Global argmax (first hit in row-major order wins ties) plus independent
// 3-point parabolic refinement per axis. Border maxima skip refinement on the
// clipped axis. An all-zero map reports no peak.
inline Peak extract_peak(const std::vector<double>& map, int width, int height) {
  if (static_cast<std::size_t>(width) * height != map.size())
    throw DomainError("extract_peak: size mismatch");
  int best = -1;
  double bv = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map[i] > bv) {
      bv = map[i];
      best = static_cast<int>(i);
    }
  Peak p;
  if (best < 0) return p;
  int row = best / width, col = best % width;

  auto refine = [](double lo, double mid, double hi) {
    double denom = lo - 2.0 * mid + hi;
    if (!(denom < 0.0)) return 0.0;  // flat or non-concave sample triple
    double off = 0.5 * (lo - hi) / denom;
    return std::clamp(off, -0.5, 0.5);
  };

  double du = 0.0, dv = 0.0;
  if (col > 0 && col < width - 1)
    du = refine(map[best - 1], map[best], map[best + 1]);
  if (row > 0 && row < height - 1)
    dv = refine(map[best - width], map[best], map[best + width]);

  p.found = true;
  p.u = col + 0.5 + du;
  p.v = row + 0.5 + dv;
  p.value = bv;
  return p;
}

}  // namespace mvhm
