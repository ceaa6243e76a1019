#include "wdpose/augment.hpp"

#include <cmath>

#include "wdpose/error.hpp"

namespace wdpose {

void ZoomRange::validate() const {
  if (!(min > 0.0) || !(max >= min) || !std::isfinite(max))
    throw InvalidParameterError("zoom range must satisfy 0 < min <= max");
}

double ZoomRange::draw(Rng& rng) const {
  validate();
  if (min == max) return min;
  return std::uniform_real_distribution<double>(min, max)(rng);
}

ViewSample zoom_augment(const ViewSample& sample, const CameraIntrinsics& cam, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw InvalidParameterError("zoom factor must be positive");
  cam.validate();
  if (factor == 1.0) return sample;

  ViewSample out = sample;
  for (auto& p : out.joints_2d) {
    p.x = cam.cx + factor * (p.x - cam.cx);
    p.y = cam.cy + factor * (p.y - cam.cy);
  }
  for (auto& p : out.joints_3d) p.z /= factor;
  for (auto& d : out.depth_features.mm) d /= factor;
  for (auto& d : out.depth_targets.mm) d /= factor;
  return out;
}

ViewSample zoom_augment(const ViewSample& sample, const CameraIntrinsics& cam,
                        const ZoomRange& range, Rng& rng) {
  return zoom_augment(sample, cam, range.draw(rng));
}

}  // namespace wdpose
