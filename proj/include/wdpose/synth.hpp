#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdpose/depth.hpp"
#include "wdpose/geometry.hpp"
#include "wdpose/random.hpp"
#include "wdpose/sample.hpp"
#include "wdpose/skeleton.hpp"

namespace wdpose::synth {

struct Range {
  double min = 0.0;
  double max = 0.0;
  double draw(Rng& rng) const;
};

/// Scene distribution. Lengths in mm, image quantities in pixels.
struct SceneConfig {
  std::size_t width = 320;
  std::size_t height = 240;
  Range focal{170.0, 210.0};
  Range principal_offset{-4.0, 4.0};
  int min_persons = 1;
  int max_persons = 4;
  Range root_depth{2000.0, 7000.0};
  /// Root depths used for annotated frames; defaults to root_depth.
  std::optional<Range> annotated_root_depth;
  Range camera_height{900.0, 1300.0};
  int min_occluders = 0;
  int max_occluders = 2;
  Range occluder_size{300.0, 900.0};
  Range occluder_gap{400.0, 1500.0};
  double occluder_thickness = 100.0;
  double limb_radius = 45.0;
  double torso_radius = 110.0;
  double head_radius = 95.0;
  Range person_scale{0.9, 1.1};
  double bone_jitter = 0.08;
  double sitting_probability = 0.2;
  double min_person_spacing = 800.0;
  double background_depth = 9000.0;  // fronto-parallel wall; 0 disables
  double sensor_noise_mm = 15.0;
  double hole_probability = 0.01;
  double detector_noise_px = 2.0;
  double occlusion_margin_mm = 50.0;
  /// Depth-estimator stand-in: per-frame relative scale error and per-joint noise.
  double estimate_scale_sigma = 0.1;
  double estimate_noise_mm = 50.0;
  /// Chance that a test-split person gets no 2D detection.
  double detection_miss_probability = 0.05;

  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const SceneConfig& config);
/// Missing keys keep their defaults.
SceneConfig scene_config_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Geometry and rendering.

struct Capsule {
  Point3D a, b;
  double radius = 0.0;
};
struct Box {
  Point3D lo, hi;
};
struct SceneGeometry {
  std::vector<Capsule> capsules;
  std::vector<Box> boxes;
  double wall_depth = 0.0;  // <= 0: no wall
  bool empty() const { return capsules.empty() && boxes.empty() && !(wall_depth > 0.0); }
};

/// Nearest optical-axis depth along the ray through `pixel`, or NaN on a miss.
double trace_depth(const SceneGeometry& geometry, const CameraIntrinsics& cam, const Point2D& pixel);

/// Noise-free per-pixel minimum depth. Parallel over rows with screen-space
/// culling of each primitive; `render_clean_serial` is the unculled
/// per-pixel reference and yields bit-identical maps.
DepthMap render_clean(const SceneGeometry& geometry, const CameraIntrinsics& cam, std::size_t width,
                      std::size_t height);
DepthMap render_clean_serial(const SceneGeometry& geometry, const CameraIntrinsics& cam,
                             std::size_t width, std::size_t height);

/// Clean render plus Gaussian sensor noise and NaN holes.
DepthMap add_sensor_noise(const DepthMap& clean, double sigma_mm, double hole_probability, Rng& rng);

// ---------------------------------------------------------------------------
// Bodies.

/// Canonical bone length (mm) of the bone ending at `joint`, 0 for the root.
double canonical_bone_length(const SkeletonSpec& spec, std::size_t joint);
/// Inclusive bounds on generated bone lengths for this config.
Range bone_length_bounds(const SceneConfig& config, const SkeletonSpec& spec, std::size_t joint);

/// Root-centered body-frame pose (y down, facing -z before the yaw).
/// Requires the default joint names.
Pose3D generate_pose(Rng& rng, const SkeletonSpec& spec, const SceneConfig& config = {});

/// Capsules around every bone of a posed body.
std::vector<Capsule> body_capsules(const Pose3D& pose, const SkeletonSpec& spec, const SceneConfig& config);
/// Radius of the thickest capsule touching each joint.
std::vector<double> joint_radii(const SkeletonSpec& spec, const SceneConfig& config);

/// Joint visibility: inside the image and the clean depth at its projection
/// is not nearer than the joint's own surface by more than the margin.
std::vector<std::uint8_t> joint_visibility(const Pose3D& pose, const DepthMap& clean,
                                           const CameraIntrinsics& cam, std::span<const double> radii,
                                           double margin_mm);

struct Scene {
  CameraIntrinsics camera;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Pose3D> poses;
  std::vector<std::vector<Point2D>> clean_2d;
  SceneGeometry geometry;
  DepthMap clean_depth{1, 1};
  DepthMap sensor_depth{1, 1};
  std::vector<std::vector<std::uint8_t>> visible;
  double estimate_scale = 1.0;
};

Scene generate_scene(Rng& rng, const SceneConfig& config, const SkeletonSpec& spec, int person_count,
                     const Range& root_depth);

// ---------------------------------------------------------------------------

struct SyntheticFrame {
  std::string frame_id;
  Split split = Split::Annotated;
  std::optional<DepthMap> sensor_depth;
};

struct SyntheticDataset {
  Dataset data;
  std::vector<SyntheticFrame> frames;
};

struct DatasetCounts {
  std::size_t annotated = 0;
  std::size_t weak = 0;
  std::size_t test = 0;
};

/// Persons are packed into frames of 1..max_persons until each split holds
/// its requested count. Each frame draws from its own seed-derived stream.
/// Samples get depth_path "depth/<frame_id>.dmap"; maps are kept in
/// `frames` only when `keep_depth_maps` is set.
SyntheticDataset generate_dataset(std::uint64_t seed, const SceneConfig& config, const SkeletonSpec& spec,
                                  const DatasetCounts& counts, bool keep_depth_maps = true);

}  // namespace wdpose::synth
