#pragma once

#include <span>
#include <vector>

#include "wdpose/depth.hpp"
#include "wdpose/skeleton.hpp"

namespace wdpose {

/// alpha in mm^2 (the residual scale is sqrt(alpha) mm); lambda weights
/// the depth term against the pose term.
struct RobustLossConfig {
  double alpha = 100.0;
  double lambda = 1.0;

  /// Throws ConfigError unless alpha > 0 and lambda >= 0.
  void validate() const;
};

/// Geman-McClure penalty x^2 / (x^2 + alpha), in [0, 1).
double gm_loss(double x, double alpha);
/// d/dx of gm_loss: 2 alpha x / (x^2 + alpha)^2.
double gm_grad(double x, double alpha);

struct PoseLoss {
  double value = 0.0;
  std::vector<Pose3D> grad;  // d value / d pred, same shape as pred
};

/// Sum over poses of the mean absolute coordinate error within each pose.
/// The subgradient at an exact zero is 0. Throws ShapeError.
PoseLoss l1_pose_loss(std::span<const Pose3D> pred, std::span<const Pose3D> gt);

/// Joint-depth predictions and sensor readouts for one unannotated sample,
/// both over the depth subset. Invalid readouts contribute nothing.
struct WeakDepthTerm {
  std::vector<double> predicted_mm;
  JointDepthVector target;
};

struct TotalLoss {
  double value = 0.0;
  double pose_term = 0.0;
  double depth_term = 0.0;  // lambda already applied
  std::vector<Pose3D> pose_grad;
  std::vector<std::vector<double>> depth_grad;  // d value / d predicted_mm
};

/// sum L1(pred, gt) + lambda * sum_samples sum_valid_joints rho(pred - target)
TotalLoss total_loss(std::span<const Pose3D> pred, std::span<const Pose3D> gt,
                     std::span<const WeakDepthTerm> weak, const RobustLossConfig& cfg);

}  // namespace wdpose
