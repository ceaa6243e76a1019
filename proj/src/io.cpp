#include "wdpose/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>

#include "wdpose/error.hpp"

namespace wdpose {

const char* to_string(Split split) {
  switch (split) {
    case Split::Annotated: return "ann";
    case Split::Weak: return "weak";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& name) {
  if (name == "ann") return Split::Annotated;
  if (name == "weak") return Split::Weak;
  if (name == "test") return Split::Test;
  throw FormatError("unknown split '" + name + "'");
}

}  // namespace wdpose

namespace wdpose::io {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json points_json(std::span<const Point2D> pts) {
  auto a = nlohmann::json::array();
  for (const auto& p : pts) a.push_back({p.x, p.y});
  return a;
}

nlohmann::json points_json(std::span<const Point3D> pts) {
  auto a = nlohmann::json::array();
  for (const auto& p : pts) a.push_back({p.x, p.y, p.z});
  return a;
}

std::vector<Point2D> points2(const nlohmann::json& a) {
  std::vector<Point2D> out;
  for (const auto& p : a) {
    if (p.size() != 2) throw FormatError("2D joints need two coordinates");
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  return out;
}

Pose3D points3(const nlohmann::json& a) {
  Pose3D out;
  for (const auto& p : a) {
    if (p.size() != 3) throw FormatError("3D joints need three coordinates");
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  }
  return out;
}

nlohmann::json depths_json(const JointDepthVector& v) {
  auto a = nlohmann::json::array();
  for (double d : v.mm) a.push_back(std::isnan(d) ? nlohmann::json(nullptr) : nlohmann::json(d));
  return a;
}

JointDepthVector depths(const nlohmann::json& a) {
  JointDepthVector v;
  for (const auto& d : a) v.mm.push_back(d.is_null() ? kNaN : d.get<double>());
  return v;
}

}  // namespace

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const fs::path& path, std::span<const nlohmann::json> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json to_json(const PersonSample& s) {
  nlohmann::json j = {{"frame_id", s.frame_id},
                      {"split", to_string(s.split)},
                      {"camera",
                       {{"fx", s.camera.fx},
                        {"fy", s.camera.fy},
                        {"cx", s.camera.cx},
                        {"cy", s.camera.cy},
                        {"width", s.image_width},
                        {"height", s.image_height}}},
                      {"joints_2d", points_json(s.view.joints_2d)}};
  if (!s.view.joints_3d.empty()) j["joints_3d"] = points_json(s.view.joints_3d);
  if (!s.depth_path.empty()) j["depth_path"] = s.depth_path;
  if (s.view.depth_features.size() > 0) j["depth_features"] = depths_json(s.view.depth_features);
  if (!s.visible.empty()) j["visible"] = s.visible;
  return j;
}

PersonSample sample_from_json(const nlohmann::json& r) {
  try {
    PersonSample s;
    s.frame_id = r.at("frame_id").get<std::string>();
    if (r.contains("split")) s.split = split_from_string(r.at("split").get<std::string>());
    const auto& c = r.at("camera");
    s.camera = {c.at("fx").get<double>(), c.at("fy").get<double>(), c.at("cx").get<double>(),
                c.at("cy").get<double>()};
    s.camera.validate();
    s.image_width = c.value("width", std::size_t{0});
    s.image_height = c.value("height", std::size_t{0});
    s.view.joints_2d = points2(r.at("joints_2d"));
    if (r.contains("joints_3d")) s.view.joints_3d = points3(r.at("joints_3d"));
    if (r.contains("depth_path")) s.depth_path = r.at("depth_path").get<std::string>();
    if (r.contains("depth_features")) s.view.depth_features = depths(r.at("depth_features"));
    if (r.contains("visible")) s.visible = r.at("visible").get<std::vector<std::uint8_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed pose record: ") + e.what());
  } catch (const InvalidParameterError& e) {
    throw FormatError(std::string("malformed pose record: ") + e.what());
  }
}

void write_samples(const fs::path& path, std::span<const PersonSample> samples) {
  std::vector<nlohmann::json> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.push_back(to_json(s));
  write_jsonl(path, records);
}

std::vector<PersonSample> read_samples(const fs::path& path) {
  std::vector<PersonSample> out;
  for (const auto& r : read_jsonl(path)) out.push_back(sample_from_json(r));
  return out;
}

void write_frame_poses(const fs::path& path, std::span<const FramePoses> frames) {
  std::vector<nlohmann::json> records;
  for (const auto& f : frames)
    for (const auto& p : f.poses) records.push_back({{"frame_id", f.frame_id}, {"joints_3d", points_json(p)}});
  write_jsonl(path, records);
}

std::vector<FramePoses> read_frame_poses(const fs::path& path) {
  std::vector<FramePoses> frames;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : read_jsonl(path)) {
    try {
      const auto id = r.at("frame_id").get<std::string>();
      auto [it, inserted] = index.try_emplace(id, frames.size());
      if (inserted) frames.push_back({id, {}});
      if (r.contains("joints_3d")) frames[it->second].poses.push_back(points3(r.at("joints_3d")));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": malformed pose record: " + e.what());
    }
  }
  return frames;
}

nlohmann::json to_json(const GenerateConfig& c) {
  return {{"scene", synth::to_json(c.scene)},
          {"counts", {{"annotated", c.counts.annotated}, {"weak", c.counts.weak}, {"test", c.counts.test}}}};
}

GenerateConfig generate_config_from_json(const nlohmann::json& doc) {
  GenerateConfig c;
  try {
    if (doc.contains("scene")) c.scene = synth::scene_config_from_json(doc.at("scene"));
    if (doc.contains("counts")) {
      const auto& n = doc.at("counts");
      c.counts.annotated = n.value("annotated", c.counts.annotated);
      c.counts.weak = n.value("weak", c.counts.weak);
      c.counts.test = n.value("test", c.counts.test);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generate config: ") + e.what());
  }
  return c;
}

void write_dataset(const fs::path& dir, const synth::SyntheticDataset& data, const SkeletonSpec& spec) {
  std::error_code ec;
  fs::create_directories(dir / "depth", ec);
  if (ec) throw IoError("cannot create " + (dir / "depth").string() + ": " + ec.message());

  std::map<std::string, bool> saved;
  for (const auto& f : data.frames) {
    if (!f.sensor_depth) continue;
    save_depth(*f.sensor_depth, dir / "depth" / (f.frame_id + ".dmap"));
    saved[f.frame_id] = true;
  }
  std::vector<PersonSample> all;
  for (const auto* group : {&data.data.annotated, &data.data.weak, &data.data.test})
    for (PersonSample s : *group) {
      if (!saved.count(s.frame_id)) s.depth_path.clear();
      all.push_back(std::move(s));
    }
  write_samples(dir / "samples.jsonl", all);
  write_frame_poses(dir / "gt.jsonl", data.data.test_gt);
  write_frame_poses(dir / "gt_weak.jsonl", data.data.weak_gt);
  write_json_file(dir / "skeleton.json", to_json(spec));
}

SkeletonSpec load_skeleton(const fs::path& dir) {
  const fs::path p = dir / "skeleton.json";
  if (!fs::exists(p)) return SkeletonSpec::mupots17();
  try {
    return skeleton_from_json(read_json_file(p));
  } catch (const ConfigError& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

Dataset load_dataset(const fs::path& dir, SkeletonSpec* spec_out) {
  const SkeletonSpec spec = load_skeleton(dir);
  if (spec_out) *spec_out = spec;
  Dataset d;
  std::string cached_path;
  std::optional<DepthMap> cached;
  for (PersonSample s : read_samples(dir / "samples.jsonl")) {
    if (!s.depth_path.empty()) {
      if (s.depth_path != cached_path) {
        cached = load_depth(dir / s.depth_path);
        cached_path = s.depth_path;
      }
      s.view.depth_targets = read_depth_at(*cached, s.view.joints_2d);
    }
    switch (s.split) {
      case Split::Annotated: d.annotated.push_back(std::move(s)); break;
      case Split::Weak: d.weak.push_back(std::move(s)); break;
      case Split::Test: d.test.push_back(std::move(s)); break;
    }
  }
  if (fs::exists(dir / "gt.jsonl")) d.test_gt = read_frame_poses(dir / "gt.jsonl");
  if (fs::exists(dir / "gt_weak.jsonl")) d.weak_gt = read_frame_poses(dir / "gt_weak.jsonl");
  return d;
}

}  // namespace wdpose::io
