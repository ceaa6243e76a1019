#pragma once

#include <vector>

#include "wdpose/depth.hpp"
#include "wdpose/geometry.hpp"
#include "wdpose/random.hpp"

namespace wdpose {

/// The per-person quantities that zoom augmentation rescales.
struct ViewSample {
  std::vector<Point2D> joints_2d;   // pixels
  std::vector<Point3D> joints_3d;   // mm; empty when unannotated
  JointDepthVector depth_features;  // depth-estimator readouts at the joints
  JointDepthVector depth_targets;   // sensor readouts at the joints
};

struct ZoomRange {
  double min = 1.0;
  double max = 1.5;

  void validate() const;
  double draw(Rng& rng) const;
};

// Zooming into the image by `factor` with the intrinsics held fixed:
// pixels scale about the principal point and every depth (3D z and depth
// readouts) is divided by the factor, so projection stays consistent.
// Throws InvalidParameterError when factor <= 0.
ViewSample zoom_augment(const ViewSample& sample, const CameraIntrinsics& cam, double factor);
ViewSample zoom_augment(const ViewSample& sample, const CameraIntrinsics& cam,
                        const ZoomRange& range, Rng& rng);

}  // namespace wdpose
