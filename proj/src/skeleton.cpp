#include "wdpose/skeleton.hpp"

#include <algorithm>
#include <set>

#include "wdpose/error.hpp"

namespace wdpose {

std::size_t SkeletonSpec::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("skeleton has no joint named '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

void SkeletonSpec::validate() const {
  const std::size_t J = joint_count();
  if (J < 2) throw ConfigError("skeleton needs at least two joints");
  if (parents.size() != J) throw ConfigError("skeleton parents length must equal joint count");
  for (std::size_t idx : {root, neck, left_knee, right_knee})
    if (idx >= J) throw ConfigError("skeleton index out of range");
  if (depth_subset.size() != kDepthSubsetSize)
    throw ConfigError("depth subset must list exactly 14 joints");
  std::set<std::size_t> seen;
  for (std::size_t j : depth_subset) {
    if (j >= J) throw ConfigError("depth subset index out of range");
    if (!seen.insert(j).second) throw ConfigError("depth subset has a repeated joint");
  }
  if (parents[root] != -1) throw ConfigError("root joint must have parent -1");
  for (std::size_t j = 0; j < J; ++j) {
    if (j == root) continue;
    // Walk to the root; a cycle or a dangling parent never gets there.
    std::size_t cur = j;
    for (std::size_t steps = 0;; ++steps) {
      const int p = parents[cur];
      if (p < 0 || static_cast<std::size_t>(p) >= J || steps > J)
        throw ConfigError("joint '" + names[j] + "' has no path to the root");
      cur = static_cast<std::size_t>(p);
      if (cur == root) break;
    }
  }
}

SkeletonSpec SkeletonSpec::mupots17() {
  SkeletonSpec s;
  s.names = {"head_top",   "neck",       "right_shoulder", "right_elbow", "right_wrist",
             "left_shoulder", "left_elbow", "left_wrist",   "right_hip",   "right_knee",
             "right_ankle", "left_hip",   "left_knee",      "left_ankle",  "pelvis",
             "spine",      "head"};
  s.parents = {16, 15, 1, 2, 3, 1, 5, 6, 14, 8, 9, 14, 11, 12, -1, 14, 1};
  s.root = 14;
  s.neck = 1;
  s.left_knee = 12;
  s.right_knee = 9;
  // wrists, elbows, shoulders, hips, knees, ankles, plus neck and pelvis
  s.depth_subset = {4, 7, 3, 6, 2, 5, 8, 11, 9, 12, 10, 13, 1, 14};
  return s;
}

nlohmann::json to_json(const SkeletonSpec& spec) {
  auto name = [&](std::size_t i) { return spec.names.at(i); };
  nlohmann::json subset = nlohmann::json::array();
  for (std::size_t j : spec.depth_subset) subset.push_back(name(j));
  return {{"names", spec.names},           {"parents", spec.parents},
          {"root", name(spec.root)},       {"neck", name(spec.neck)},
          {"left_knee", name(spec.left_knee)}, {"right_knee", name(spec.right_knee)},
          {"depth_subset", subset}};
}

SkeletonSpec skeleton_from_json(const nlohmann::json& doc) {
  SkeletonSpec s;
  try {
    s.names = doc.at("names").get<std::vector<std::string>>();
    s.parents = doc.at("parents").get<std::vector<int>>();
    s.root = s.index_of(doc.at("root").get<std::string>());
    s.neck = s.index_of(doc.at("neck").get<std::string>());
    s.left_knee = s.index_of(doc.at("left_knee").get<std::string>());
    s.right_knee = s.index_of(doc.at("right_knee").get<std::string>());
    for (const auto& n : doc.at("depth_subset")) s.depth_subset.push_back(s.index_of(n.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed skeleton document: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

void check_pose(const Pose3D& pose, const SkeletonSpec& spec) {
  if (pose.size() != spec.joint_count())
    throw ShapeError("pose has " + std::to_string(pose.size()) + " joints, skeleton has " +
                     std::to_string(spec.joint_count()));
}

}  // namespace

PoseDecomposition decompose(const Pose3D& pose, const SkeletonSpec& spec) {
  check_pose(pose, spec);
  PoseDecomposition d;
  d.root = pose[spec.root];
  d.relative.reserve(pose.size() - 1);
  for (std::size_t j = 0; j < pose.size(); ++j)
    if (j != spec.root) d.relative.push_back(pose[j] - d.root);
  return d;
}

Pose3D compose(const PoseDecomposition& d, const SkeletonSpec& spec) {
  const std::size_t J = spec.joint_count();
  if (d.relative.size() + 1 != J) throw ShapeError("decomposition size does not match skeleton");
  Pose3D pose(J);
  std::size_t k = 0;
  for (std::size_t j = 0; j < J; ++j) pose[j] = j == spec.root ? d.root : d.relative[k++] + d.root;
  return pose;
}

double knee_to_neck_length(const Pose3D& pose, const SkeletonSpec& spec) {
  check_pose(pose, spec);
  const Point3D knees = (pose[spec.left_knee] + pose[spec.right_knee]) * 0.5;
  return distance(pose[spec.neck], knees);
}

Pose3D height_normalize(const Pose3D& pose, const SkeletonSpec& spec, double target_length) {
  if (!(target_length > 0.0)) throw InvalidParameterError("target length must be positive");
  const double length = knee_to_neck_length(pose, spec);
  if (!(length > 0.0)) throw DegeneratePoseError("knee-to-neck distance is zero");
  const double scale = target_length / length;
  const Point3D hip = pose[spec.root];
  Pose3D out(pose.size());
  for (std::size_t j = 0; j < pose.size(); ++j)
    out[j] = j == spec.root ? hip : hip + (pose[j] - hip) * scale;
  return out;
}

}  // namespace wdpose
