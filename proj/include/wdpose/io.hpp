#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "wdpose/metrics.hpp"
#include "wdpose/sample.hpp"
#include "wdpose/skeleton.hpp"
#include "wdpose/synth.hpp"

namespace wdpose::io {

namespace fs = std::filesystem;

nlohmann::json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const nlohmann::json& doc);

/// One JSON document per non-blank line. Parse failures are FormatErrors
/// naming the line.
std::vector<nlohmann::json> read_jsonl(const fs::path& path);
void write_jsonl(const fs::path& path, std::span<const nlohmann::json> records);

/// Pose record: {frame_id, camera:{fx,fy,cx,cy,width,height}, joints_2d,
/// joints_3d?, depth_path?} plus the optional extensions split,
/// depth_features (null = invalid) and visible.
nlohmann::json to_json(const PersonSample& sample);
PersonSample sample_from_json(const nlohmann::json& record);

void write_samples(const fs::path& path, std::span<const PersonSample> samples);
std::vector<PersonSample> read_samples(const fs::path& path);

/// {frame_id, joints_3d} per pose.
void write_frame_poses(const fs::path& path, std::span<const FramePoses> frames);
/// Groups every record carrying joints_3d by frame_id, in first-appearance
/// order. Records without joints_3d are skipped.
std::vector<FramePoses> read_frame_poses(const fs::path& path);

struct GenerateConfig {
  synth::SceneConfig scene;
  synth::DatasetCounts counts{200, 2000, 500};
};
nlohmann::json to_json(const GenerateConfig& config);
GenerateConfig generate_config_from_json(const nlohmann::json& doc);

/// Dataset directory layout:
///   samples.jsonl     every detected person of every split
///   gt.jsonl          test-split ground truth, detected or not
///   gt_weak.jsonl     withheld weak-split ground truth
///   skeleton.json
///   depth/<frame_id>.dmap
void write_dataset(const fs::path& dir, const synth::SyntheticDataset& data, const SkeletonSpec& spec);

/// Sensor depth targets are read out of each sample's DMAP file at its 2D
/// joints. Uses the default skeleton when skeleton.json is absent.
Dataset load_dataset(const fs::path& dir, SkeletonSpec* spec_out = nullptr);
SkeletonSpec load_skeleton(const fs::path& dir);

}  // namespace wdpose::io
