#include "wdpose/geometry.hpp"

#include <cmath>
#include <string>

#include "wdpose/error.hpp"

namespace wdpose {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy))
    throw InvalidParameterError("camera focal lengths must be positive and finite");
  if (!std::isfinite(cx) || !std::isfinite(cy))
    throw InvalidParameterError("camera principal point must be finite");
}

double norm(const Point3D& p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }

double distance(const Point3D& a, const Point3D& b) { return norm(a - b); }

std::vector<Point2D> normalize_2d(std::span<const Point2D> pixels, const CameraIntrinsics& cam) {
  cam.validate();
  std::vector<Point2D> out;
  out.reserve(pixels.size());
  for (const auto& p : pixels) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw InvalidInputError("normalize_2d: non-finite pixel coordinate");
    out.push_back({(p.x - cam.cx) / cam.fx, (p.y - cam.cy) / cam.fy});
  }
  return out;
}

std::vector<Point2D> denormalize_2d(std::span<const Point2D> normalized, const CameraIntrinsics& cam) {
  cam.validate();
  std::vector<Point2D> out;
  out.reserve(normalized.size());
  for (const auto& p : normalized) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw InvalidInputError("denormalize_2d: non-finite coordinate");
    out.push_back({p.x * cam.fx + cam.cx, p.y * cam.fy + cam.cy});
  }
  return out;
}

Point2D project(const Point3D& p, const CameraIntrinsics& cam) {
  if (!(p.z > 0.0)) throw BehindCameraError("project: point has z = " + std::to_string(p.z));
  return {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy};
}

std::vector<Point2D> project(std::span<const Point3D> points, const CameraIntrinsics& cam) {
  std::vector<Point2D> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(project(p, cam));
  return out;
}

Point3D backproject(const Point2D& pixel, double depth, const CameraIntrinsics& cam) {
  return {(pixel.x - cam.cx) / cam.fx * depth, (pixel.y - cam.cy) / cam.fy * depth, depth};
}

}  // namespace wdpose
