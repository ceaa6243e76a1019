#include "wdpose/loss.hpp"

#include <cmath>

#include "wdpose/error.hpp"

namespace wdpose {

void RobustLossConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be non-negative");
}

double gm_loss(double x, double alpha) {
  const double x2 = x * x;
  return x2 / (x2 + alpha);
}

double gm_grad(double x, double alpha) {
  const double d = x * x + alpha;
  return 2.0 * alpha * x / (d * d);
}

PoseLoss l1_pose_loss(std::span<const Pose3D> pred, std::span<const Pose3D> gt) {
  if (pred.size() != gt.size()) throw ShapeError("l1_pose_loss: pose count mismatch");
  PoseLoss out;
  out.grad.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gt[i].size() || pred[i].empty())
      throw ShapeError("l1_pose_loss: joint count mismatch");
    const double n = 3.0 * static_cast<double>(pred[i].size());
    const double inv_n = 1.0 / n;
    auto sign = [&](double d) { return d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0); };
    Pose3D g(pred[i].size());
    double sum = 0.0;
    for (std::size_t j = 0; j < pred[i].size(); ++j) {
      const Point3D d = pred[i][j] - gt[i][j];
      sum += std::abs(d.x) + std::abs(d.y) + std::abs(d.z);
      g[j] = {sign(d.x), sign(d.y), sign(d.z)};
    }
    out.value += sum / n;
    out.grad.push_back(std::move(g));
  }
  return out;
}

TotalLoss total_loss(std::span<const Pose3D> pred, std::span<const Pose3D> gt,
                     std::span<const WeakDepthTerm> weak, const RobustLossConfig& cfg) {
  cfg.validate();
  TotalLoss out;
  PoseLoss pose = l1_pose_loss(pred, gt);
  out.pose_term = pose.value;
  out.pose_grad = std::move(pose.grad);

  out.depth_grad.reserve(weak.size());
  double depth_sum = 0.0;
  for (const auto& w : weak) {
    if (w.predicted_mm.size() != w.target.size())
      throw ShapeError("total_loss: depth prediction and target sizes differ");
    std::vector<double> g(w.predicted_mm.size(), 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!w.target.valid(j)) continue;
      const double r = w.predicted_mm[j] - w.target.mm[j];
      depth_sum += gm_loss(r, cfg.alpha);
      g[j] = cfg.lambda * gm_grad(r, cfg.alpha);
    }
    out.depth_grad.push_back(std::move(g));
  }
  out.depth_term = cfg.lambda * depth_sum;
  out.value = out.pose_term + out.depth_term;
  return out;
}

}  // namespace wdpose
