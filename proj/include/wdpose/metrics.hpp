#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdpose/skeleton.hpp"

namespace wdpose {

struct FramePoses {
  std::string frame_id;
  std::vector<Pose3D> poses;
};

/// Ground truth and predictions aligned by frame: pred[i] holds the
/// predictions for gt[i].frame_id (possibly none). match[i][g] is the
/// predicted pose index matched to gt pose g, if any.
struct EvalPair {
  std::vector<FramePoses> gt;
  std::vector<FramePoses> pred;
  std::vector<std::vector<std::optional<std::size_t>>> match;
  std::size_t root = 0;
};

inline constexpr double kDefaultMatchThreshold = 250.0;
inline constexpr double kPckThreshold = 150.0;

/// Greedy injective matching within each frame by ascending root-joint
/// distance; pairs farther apart than `threshold` mm stay unmatched.
/// Predicted frames absent from `gt` are ignored.
EvalPair match_poses(std::span<const FramePoses> gt, std::span<const FramePoses> pred, std::size_t root,
                     double threshold = kDefaultMatchThreshold);

enum class PckScope { EveryPose, DetectedOnly };

/// Mean per-joint Euclidean error over matched poses; nullopt with no match.
std::optional<double> a_mpjpe(const EvalPair& pair);
/// As a_mpjpe after moving each predicted root onto its ground-truth root.
std::optional<double> r_mpjpe(const EvalPair& pair);
/// Percent of keypoints with error strictly below `threshold` mm. In
/// EveryPose scope unmatched ground-truth poses count as misses.
std::optional<double> a_3dpck(const EvalPair& pair, PckScope scope = PckScope::EveryPose,
                              double threshold = kPckThreshold);
std::optional<double> r_3dpck(const EvalPair& pair, PckScope scope = PckScope::EveryPose,
                              double threshold = kPckThreshold);
/// Percent of ground-truth poses with a match; nullopt with no ground truth.
std::optional<double> detection_rate(const EvalPair& pair);

struct MetricReport {
  std::optional<double> a_mpjpe;
  std::optional<double> r_mpjpe;
  std::optional<double> a_3dpck;
  std::optional<double> r_3dpck;
  std::optional<double> detection_rate;
  std::size_t matched = 0;
  std::size_t total = 0;
  bool detected_only = false;
  bool normalized_skeletons = false;
};

struct EvalOptions {
  double match_threshold = kDefaultMatchThreshold;
  double pck_threshold = kPckThreshold;
  bool detected_only = false;
  /// Rescale every gt and predicted pose about the hip to a fixed
  /// knee-to-neck length before scoring.
  bool normalized_skeletons = false;
  double normalized_length = kDefaultKneeNeckLength;
};

MetricReport evaluate(std::span<const FramePoses> gt, std::span<const FramePoses> pred,
                      const SkeletonSpec& skeleton, const EvalOptions& options = {});

nlohmann::json to_json(const MetricReport& report);
std::string format_table(const MetricReport& report);

}  // namespace wdpose
