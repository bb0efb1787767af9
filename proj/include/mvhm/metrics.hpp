#pragma once

#include "mvhm/skeleton.hpp"

#include <Eigen/Dense>

#include <vector>

namespace mvhm {

// Mean euclidean distance over the 21 joints, millimeters.
inline double epe(const KeypointSet& pred, const KeypointSet& gt) {
  double sum = 0.0;
  for (int i = 0; i < kNumJoints; ++i) sum += (pred[i] - gt[i]).norm();
  return sum / kNumJoints;
}

// Fraction of joints within threshold (inclusive).
inline double pck(const KeypointSet& pred, const KeypointSet& gt, double thresh) {
  if (!(thresh >= 0.0)) throw DomainError("pck: negative threshold");
  int ok = 0;
  for (int i = 0; i < kNumJoints; ++i)
    if ((pred[i] - gt[i]).norm() <= thresh) ++ok;
  return static_cast<double>(ok) / kNumJoints;
}

struct PckCurve {
  double lo = 0, hi = 0;
  std::vector<double> thresholds;
  std::vector<double> values;
};

// Aggregated over every joint of every sample; `steps` evenly spaced
// thresholds including both endpoints.
inline PckCurve pck_curve(const std::vector<KeypointSet>& pred,
                          const std::vector<KeypointSet>& gt, double lo, double hi,
                          int steps = 100) {
  if (pred.size() != gt.size() || pred.empty())
    throw DomainError("pck_curve: prediction/ground-truth size mismatch");
  if (!(lo >= 0.0) || !(hi > lo)) throw DomainError("pck_curve: bad threshold range");
  if (steps < 2) throw DomainError("pck_curve: need at least two thresholds");
  std::vector<double> err;
  err.reserve(pred.size() * kNumJoints);
  for (std::size_t s = 0; s < pred.size(); ++s)
    for (int i = 0; i < kNumJoints; ++i)
      err.push_back((pred[s][i] - gt[s][i]).norm());
  PckCurve c;
  c.lo = lo;
  c.hi = hi;
  for (int k = 0; k < steps; ++k) {
    double t = lo + (hi - lo) * k / (steps - 1);
    std::size_t ok = 0;
    for (double e : err)
      if (e <= t) ++ok;
    c.thresholds.push_back(t);
    c.values.push_back(static_cast<double>(ok) / err.size());
  }
  return c;
}

// Trapezoidal area under the curve, normalized by the threshold span so a
// perfect predictor scores exactly 1.
inline double auc(const PckCurve& c) {
  if (c.thresholds.size() < 2) throw DomainError("auc: curve too short");
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < c.thresholds.size(); ++k)
    area += 0.5 * (c.values[k] + c.values[k + 1]) *
            (c.thresholds[k + 1] - c.thresholds[k]);
  return area / (c.hi - c.lo);
}

// --- training losses --------------------------------------------------------

// Mean squared Frobenius distance between S stacked heatmap sets and one
// target set: (1 / (S K)) sum_s sum_k |H_sk - T_k|_F^2.
inline double heatmap_loss(const std::vector<std::vector<Eigen::MatrixXd>>& stages,
                           const std::vector<Eigen::MatrixXd>& target) {
  if (stages.empty() || target.empty()) throw DomainError("heatmap_loss: empty input");
  double sum = 0.0;
  for (const auto& stage : stages) {
    if (stage.size() != target.size())
      throw DomainError("heatmap_loss: channel count mismatch");
    for (std::size_t k = 0; k < stage.size(); ++k) {
      if (stage[k].rows() != target[k].rows() || stage[k].cols() != target[k].cols())
        throw DomainError("heatmap_loss: map shape mismatch");
      sum += (stage[k] - target[k]).squaredNorm();
    }
  }
  return sum / (static_cast<double>(stages.size()) * target.size());
}

// Per-vertex mean squared distance: (1/N) |V - V*|_F^2.
inline double mesh_loss(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw DomainError("mesh_loss: vertex count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - gt[i]).squaredNorm();
  return sum / static_cast<double>(pred.size());
}

// Per-joint mean squared depth error: (1/K) sum (d - d*)^2.
inline double depth_loss(const std::array<double, kNumJoints>& pred,
                         const std::array<double, kNumJoints>& gt) {
  double sum = 0.0;
  for (int i = 0; i < kNumJoints; ++i) {
    double d = pred[i] - gt[i];
    sum += d * d;
  }
  return sum / kNumJoints;
}

// Per-joint mean squared position error: (1/K) |P - P*|_F^2.
inline double pose_loss(const KeypointSet& pred, const KeypointSet& gt) {
  double sum = 0.0;
  for (int i = 0; i < kNumJoints; ++i) sum += (pred[i] - gt[i]).squaredNorm();
  return sum / kNumJoints;
}

// --- evaluation report ------------------------------------------------------

struct PoseErrorReport {
  std::size_t samples = 0;
  double mean_epe = 0.0;
  std::array<double, kNumJoints> per_joint_epe{};
  PckCurve curve_0_50;
  PckCurve curve_20_50;
  double auc_0_50 = 0.0;
  double auc_20_50 = 0.0;
};

inline PoseErrorReport make_report(const std::vector<KeypointSet>& pred,
                                   const std::vector<KeypointSet>& gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw DomainError("report: prediction/ground-truth size mismatch");
  PoseErrorReport r;
  r.samples = pred.size();
  for (std::size_t s = 0; s < pred.size(); ++s) {
    r.mean_epe += epe(pred[s], gt[s]);
    for (int i = 0; i < kNumJoints; ++i)
      r.per_joint_epe[i] += (pred[s][i] - gt[s][i]).norm();
  }
  r.mean_epe /= pred.size();
  for (double& v : r.per_joint_epe) v /= pred.size();
  r.curve_0_50 = pck_curve(pred, gt, 0.0, 50.0, 100);
  r.curve_20_50 = pck_curve(pred, gt, 20.0, 50.0, 100);
  r.auc_0_50 = auc(r.curve_0_50);
  r.auc_20_50 = auc(r.curve_20_50);
  return r;
}

}  // namespace mvhm
