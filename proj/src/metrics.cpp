#include "wdpose/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "wdpose/error.hpp"

namespace wdpose {

EvalPair match_poses(std::span<const FramePoses> gt, std::span<const FramePoses> pred, std::size_t root,
                     double threshold) {
  std::unordered_map<std::string, const FramePoses*> by_id;
  for (const auto& f : pred) {
    if (!by_id.emplace(f.frame_id, &f).second)
      throw InvalidInputError("duplicate predicted frame '" + f.frame_id + "'");
  }

  EvalPair pair;
  pair.root = root;
  pair.gt.assign(gt.begin(), gt.end());
  pair.pred.resize(gt.size());
  pair.match.resize(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    pair.pred[i].frame_id = gt[i].frame_id;
    if (auto it = by_id.find(gt[i].frame_id); it != by_id.end()) pair.pred[i].poses = it->second->poses;
  }

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(gt.size()); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto& g = pair.gt[i].poses;
    const auto& p = pair.pred[i].poses;
    std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
    for (std::size_t a = 0; a < g.size(); ++a)
      for (std::size_t b = 0; b < p.size(); ++b) {
        if (root >= g[a].size() || root >= p[b].size()) continue;
        const double d = distance(g[a][root], p[b][root]);
        if (d <= threshold) candidates.emplace_back(d, a, b);
      }
    std::sort(candidates.begin(), candidates.end());
    std::vector<std::optional<std::size_t>> m(g.size());
    std::vector<bool> used(p.size(), false);
    for (const auto& [d, a, b] : candidates) {
      if (m[a] || used[b]) continue;
      m[a] = b;
      used[b] = true;
    }
    pair.match[i] = std::move(m);
  }
  return pair;
}

namespace {

struct Tally {
  double abs_err = 0.0;
  double rel_err = 0.0;
  std::size_t matched_joints = 0;
  std::size_t abs_hits = 0;
  std::size_t rel_hits = 0;
  std::size_t gt_joints = 0;
  std::size_t matched_poses = 0;
  std::size_t gt_poses = 0;
};

Tally tally(const EvalPair& pair, double pck_threshold) {
  // Shape checks stay outside the parallel region; exceptions cannot cross it.
  for (std::size_t i = 0; i < pair.gt.size(); ++i)
    for (std::size_t a = 0; a < pair.gt[i].poses.size(); ++a) {
      const auto& g = pair.gt[i].poses[a];
      if (pair.root >= g.size()) throw ShapeError("root index exceeds ground-truth joint count");
      if (pair.match[i][a] && pair.pred[i].poses[*pair.match[i][a]].size() != g.size())
        throw ShapeError("predicted and ground-truth joint counts differ");
    }

  std::vector<Tally> per_frame(pair.gt.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(pair.gt.size()); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Tally& t = per_frame[i];
    for (std::size_t a = 0; a < pair.gt[i].poses.size(); ++a) {
      const Pose3D& g = pair.gt[i].poses[a];
      t.gt_poses += 1;
      t.gt_joints += g.size();
      if (!pair.match[i][a]) continue;
      const Pose3D& p = pair.pred[i].poses[*pair.match[i][a]];
      const Point3D shift = g[pair.root] - p[pair.root];
      t.matched_poses += 1;
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double ea = distance(p[j], g[j]);
        const double er = distance(p[j] + shift, g[j]);
        t.abs_err += ea;
        t.rel_err += er;
        t.matched_joints += 1;
        t.abs_hits += ea < pck_threshold ? 1 : 0;
        t.rel_hits += er < pck_threshold ? 1 : 0;
      }
    }
  }
  Tally total;
  for (const auto& t : per_frame) {
    total.abs_err += t.abs_err;
    total.rel_err += t.rel_err;
    total.matched_joints += t.matched_joints;
    total.abs_hits += t.abs_hits;
    total.rel_hits += t.rel_hits;
    total.gt_joints += t.gt_joints;
    total.matched_poses += t.matched_poses;
    total.gt_poses += t.gt_poses;
  }
  return total;
}

std::optional<double> ratio(double num, std::size_t den, double scale = 1.0) {
  if (den == 0) return std::nullopt;
  return scale * num / static_cast<double>(den);
}

}  // namespace

std::optional<double> a_mpjpe(const EvalPair& pair) {
  const Tally t = tally(pair, kPckThreshold);
  return ratio(t.abs_err, t.matched_joints);
}

std::optional<double> r_mpjpe(const EvalPair& pair) {
  const Tally t = tally(pair, kPckThreshold);
  return ratio(t.rel_err, t.matched_joints);
}

std::optional<double> a_3dpck(const EvalPair& pair, PckScope scope, double threshold) {
  const Tally t = tally(pair, threshold);
  return ratio(static_cast<double>(t.abs_hits),
               scope == PckScope::EveryPose ? t.gt_joints : t.matched_joints, 100.0);
}

std::optional<double> r_3dpck(const EvalPair& pair, PckScope scope, double threshold) {
  const Tally t = tally(pair, threshold);
  return ratio(static_cast<double>(t.rel_hits),
               scope == PckScope::EveryPose ? t.gt_joints : t.matched_joints, 100.0);
}

std::optional<double> detection_rate(const EvalPair& pair) {
  const Tally t = tally(pair, kPckThreshold);
  return ratio(static_cast<double>(t.matched_poses), t.gt_poses, 100.0);
}

MetricReport evaluate(std::span<const FramePoses> gt, std::span<const FramePoses> pred,
                      const SkeletonSpec& skeleton, const EvalOptions& options) {
  std::vector<FramePoses> g(gt.begin(), gt.end());
  std::vector<FramePoses> p(pred.begin(), pred.end());
  if (options.normalized_skeletons) {
    for (auto* frames : {&g, &p})
      for (auto& f : *frames)
        for (auto& pose : f.poses) pose = height_normalize(pose, skeleton, options.normalized_length);
  }
  const EvalPair pair = match_poses(g, p, skeleton.root, options.match_threshold);
  const Tally t = tally(pair, options.pck_threshold);
  const std::size_t pck_den = options.detected_only ? t.matched_joints : t.gt_joints;

  MetricReport r;
  r.a_mpjpe = ratio(t.abs_err, t.matched_joints);
  r.r_mpjpe = ratio(t.rel_err, t.matched_joints);
  r.a_3dpck = ratio(static_cast<double>(t.abs_hits), pck_den, 100.0);
  r.r_3dpck = ratio(static_cast<double>(t.rel_hits), pck_den, 100.0);
  r.detection_rate = ratio(static_cast<double>(t.matched_poses), t.gt_poses, 100.0);
  r.matched = t.matched_poses;
  r.total = t.gt_poses;
  r.detected_only = options.detected_only;
  r.normalized_skeletons = options.normalized_skeletons;
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"a_mpjpe", opt(r.a_mpjpe)},
          {"r_mpjpe", opt(r.r_mpjpe)},
          {"a_3dpck", opt(r.a_3dpck)},
          {"r_3dpck", opt(r.r_3dpck)},
          {"detection_rate", opt(r.detection_rate)},
          {"matched", r.matched},
          {"total", r.total},
          {"detected_only", r.detected_only},
          {"normalized_skeletons", r.normalized_skeletons}};
}

std::string format_table(const MetricReport& r) {
  std::ostringstream os;
  auto row = [&](const char* name, const std::optional<double>& v, const char* unit) {
    os << std::left << std::setw(16) << name << std::right << std::setw(10);
    if (v)
      os << std::fixed << std::setprecision(2) << *v;
    else
      os << "n/a";
    os << ' ' << unit << '\n';
  };
  os << (r.detected_only ? "detected poses only" : "every pose")
     << (r.normalized_skeletons ? ", normalized skeletons" : "") << '\n';
  row("A-MPJPE", r.a_mpjpe, "mm");
  row("R-MPJPE", r.r_mpjpe, "mm");
  row("A-3DPCK", r.a_3dpck, "%");
  row("R-3DPCK", r.r_3dpck, "%");
  row("Det. rate", r.detection_rate, "%");
  os << std::left << std::setw(16) << "matched" << std::right << std::setw(10)
     << (std::to_string(r.matched) + "/" + std::to_string(r.total)) << '\n';
  return os.str();
}

}  // namespace wdpose
