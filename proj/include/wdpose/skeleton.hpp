#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdpose/geometry.hpp"

namespace wdpose {

/// J camera-centered joints in millimeters.
using Pose3D = std::vector<Point3D>;

/// Joint topology. `parents[root] == -1`; every other joint has a parent
/// with a path to the root. `depth_subset` lists the 14 joints whose sensor
/// depth the joint-depth network predicts.
struct SkeletonSpec {
  std::vector<std::string> names;
  std::vector<int> parents;
  std::size_t root = 0;
  std::size_t neck = 0;
  std::size_t left_knee = 0;
  std::size_t right_knee = 0;
  std::vector<std::size_t> depth_subset;

  std::size_t joint_count() const { return names.size(); }
  std::size_t index_of(const std::string& name) const;

  /// Throws ConfigError on inconsistent indices or a malformed tree.
  void validate() const;

  /// 17-joint MuPoTS-compatible layout rooted at the pelvis.
  static SkeletonSpec mupots17();
  friend bool operator==(const SkeletonSpec&, const SkeletonSpec&) = default;
};

inline constexpr std::size_t kDepthSubsetSize = 14;
inline constexpr double kDefaultKneeNeckLength = 920.0;

nlohmann::json to_json(const SkeletonSpec& spec);
SkeletonSpec skeleton_from_json(const nlohmann::json& doc);

/// Absolute root location plus root-relative offsets of the other joints,
/// in joint order with the root skipped.
struct PoseDecomposition {
  Point3D root;
  std::vector<Point3D> relative;
};

PoseDecomposition decompose(const Pose3D& pose, const SkeletonSpec& spec);
Pose3D compose(const PoseDecomposition& d, const SkeletonSpec& spec);

/// Distance from the neck to the midpoint of the two knees.
double knee_to_neck_length(const Pose3D& pose, const SkeletonSpec& spec);

/// Uniform scaling about the root so the knee-to-neck length equals
/// `target_length`. Throws DegeneratePoseError for a zero length.
Pose3D height_normalize(const Pose3D& pose, const SkeletonSpec& spec,
                        double target_length = kDefaultKneeNeckLength);

}  // namespace wdpose
