#pragma once

#include <span>
#include <vector>

namespace wdpose {

/// Pinhole calibration in pixels. No lens distortion.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  /// Throws InvalidParameterError unless fx, fy > 0 and cx, cy finite.
  void validate() const;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Pixel coordinates, or dimensionless ray coordinates after normalization.
struct Point2D {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2D&, const Point2D&) = default;
};

/// Camera-centered millimeters, z along the optical axis.
struct Point3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Point3D&, const Point3D&) = default;

  Point3D operator+(const Point3D& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3D operator-(const Point3D& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3D operator*(double s) const { return {x * s, y * s, z * s}; }
};

double norm(const Point3D& p);
double distance(const Point3D& a, const Point3D& b);

// ((x - cx) / fx, (y - cy) / fy) per point. Throws InvalidInputError on
// non-finite input.
std::vector<Point2D> normalize_2d(std::span<const Point2D> pixels, const CameraIntrinsics& cam);
std::vector<Point2D> denormalize_2d(std::span<const Point2D> normalized, const CameraIntrinsics& cam);

// Throws BehindCameraError when p.z <= 0.
Point2D project(const Point3D& p, const CameraIntrinsics& cam);
std::vector<Point2D> project(std::span<const Point3D> points, const CameraIntrinsics& cam);

// Pixel -> camera point at the given optical-axis depth.
Point3D backproject(const Point2D& pixel, double depth, const CameraIntrinsics& cam);

}  // namespace wdpose
