#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdpose/augment.hpp"
#include "wdpose/depth.hpp"
#include "wdpose/loss.hpp"
#include "wdpose/metrics.hpp"
#include "wdpose/nn.hpp"
#include "wdpose/sample.hpp"
#include "wdpose/skeleton.hpp"

namespace wdpose {

/// Per-dimension affine standardization (x - mean) / std.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t size() const { return mean.size(); }
  /// Fits over the non-NaN entries of each column; every column needs at
  /// least two finite values and a nonzero spread, else ConfigError.
  static Standardizer fit(std::span<const std::vector<double>> rows);
};

/// PoseNet input and output statistics plus the scale of the joint-depth
/// network's outputs, all fitted on training data.
struct StandardizerStats {
  Standardizer input;   // [normalized 2D (2J) | depth features (J)]
  Standardizer output;  // [root xyz | relative xyz of the J-1 other joints]
  Standardizer depth;   // sensor depth over the depth subset, mm
};

/// Unstandardized PoseNet input; invalid depth features stay NaN. Throws
/// InvalidInputError when the sample has no depth features.
std::vector<double> raw_input(const ViewSample& view, const CameraIntrinsics& cam, const SkeletonSpec& spec);
/// Unstandardized PoseNet target.
std::vector<double> raw_target(const Pose3D& pose, const SkeletonSpec& spec);

/// Input and output statistics come from the annotated samples alone. The
/// depth scale uses the valid sensor readouts of every sample; joints with
/// too few readouts fall back to the annotated root-depth statistics.
/// Throws ConfigError with fewer than two annotated samples or a constant
/// input or output dimension.
StandardizerStats fit_standardizer(std::span<const PersonSample> annotated, const SkeletonSpec& spec,
                                   std::span<const PersonSample> weak = {});

/// Standardized PoseNet input. Invalid depth features map to 0.
std::vector<double> build_input(const ViewSample& view, const CameraIntrinsics& cam,
                                const StandardizerStats& stats, const SkeletonSpec& spec);
/// Same, reading the depth features from a map at the 2D joints.
std::vector<double> build_input(std::span<const Point2D> joints_2d, const CameraIntrinsics& cam,
                                const DepthMap& depth_features, const StandardizerStats& stats,
                                const SkeletonSpec& spec);

/// Standardized PoseNet output -> absolute camera-space pose in mm.
Pose3D decode_output(std::span<const double> output, const StandardizerStats& stats, const SkeletonSpec& spec);

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 64;
  double lambda = 1.0;
  double alpha = 100.0;
  double learning_rate = 1e-3;
  double lr_decay = 0.96;
  int lr_decay_every = 4;
  double zoom_min = 1.0;
  double zoom_max = 1.5;
  std::uint64_t seed = 0;
  std::size_t hidden_width = 1024;
  std::size_t depth_hidden_width = 1024;
  std::size_t residual_blocks = 2;
  double dropout = 0.5;
  /// Keep the weak-sample gradient out of PoseNet.
  bool stop_gradient = false;
  std::string data_dir;

  /// Throws ConfigError.
  void validate() const;
  RobustLossConfig loss() const { return {alpha, lambda}; }
  ZoomRange zoom() const { return {zoom_min, zoom_max}; }
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& doc);

inline constexpr int kBundleVersion = 1;

struct ModelBundle {
  SkeletonSpec skeleton;
  StandardizerStats stats;
  nn::Mlp posenet;
  nn::Mlp jdn;

  /// Throws ShapeError when the widths disagree with each other.
  void validate() const;
};

/// Freshly initialized networks of the configured sizes.
ModelBundle make_bundle(const SkeletonSpec& spec, StandardizerStats stats, const TrainConfig& config);

nlohmann::json to_json(const ModelBundle& bundle);
/// Throws FormatError.
ModelBundle bundle_from_json(const nlohmann::json& doc);
void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

/// Eval-mode absolute poses; JointDepthNet is not run.
std::vector<Pose3D> predict(const ModelBundle& bundle, std::span<const PersonSample> samples);
/// Predictions grouped by frame in first-appearance order.
std::vector<FramePoses> predict_frames(const ModelBundle& bundle, std::span<const PersonSample> samples);

/// One frozen mini-batch in network space.
struct Batch {
  nn::Matrix annotated_input;  // standardized PoseNet inputs
  std::vector<Pose3D> annotated_gt;
  nn::Matrix weak_input;
  std::vector<JointDepthVector> weak_targets;  // over the depth subset, mm
};

struct BatchResult {
  double value = 0.0;
  double pose_term = 0.0;
  double depth_term = 0.0;
  std::vector<double> posenet_grad;
  std::vector<double> jdn_grad;
  nn::Matrix annotated_input_grad;
  nn::Matrix weak_input_grad;
  std::vector<std::vector<double>> depth_grad;  // d value / d predicted depth, mm
  std::vector<std::vector<double>> predicted_depth;
};

/// Total objective and its exact gradient on one batch. Dropout masks are
/// fixed by `seed`. `signature`, when given, receives the combined ReLU
/// activation signature of every network pass.
BatchResult evaluate_batch(const ModelBundle& bundle, const Batch& batch, const RobustLossConfig& loss,
                           nn::Mode mode, std::uint64_t seed, bool stop_gradient = false,
                           std::uint64_t* signature = nullptr);

Batch make_batch(const ModelBundle& bundle, std::span<const PersonSample> annotated,
                 std::span<const PersonSample> weak);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double pose_loss = 0.0;  // mean L1 per annotated sample
  double weak_loss = 0.0;  // mean lambda-weighted robust term per weak sample
  double total = 0.0;      // mean batch objective
  std::size_t steps = 0;
  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};
nlohmann::json to_json(const EpochLog& log);

struct TrainResult {
  ModelBundle bundle;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&, const ModelBundle&)>;

/// Joint training of PoseNet and JointDepthNet. With weak data each step
/// takes batch_size / 2 annotated and batch_size / 2 weak samples (weak
/// drawn with replacement); without it, batch_size annotated samples.
/// Throws ConfigError for an empty annotated set.
TrainResult train(const TrainConfig& config, const Dataset& data, const SkeletonSpec& spec,
                  const EpochCallback& on_epoch = {});

/// Mean |d loss / d predicted depth| per valid joint, split by the
/// sample's visibility flags, in eval mode.
struct DepthGradientProfile {
  double visible_mean = 0.0;
  double occluded_mean = 0.0;
  std::size_t visible_count = 0;
  std::size_t occluded_count = 0;
};
DepthGradientProfile depth_gradient_profile(const ModelBundle& bundle, std::span<const PersonSample> weak,
                                            const RobustLossConfig& loss);

}  // namespace wdpose
