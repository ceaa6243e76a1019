#include "wdpose/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numbers>

#include "wdpose/error.hpp"

namespace wdpose::synth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double dot(const Point3D& a, const Point3D& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Point3D cross(const Point3D& a, const Point3D& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Rodrigues rotation of v by the axis-angle vector w.
Point3D rotate(const Point3D& v, const Point3D& w) {
  const double angle = norm(w);
  if (angle < 1e-15) return v;
  const Point3D k = w * (1.0 / angle);
  const double c = std::cos(angle), s = std::sin(angle);
  return v * c + cross(k, v) * s + k * (dot(k, v) * (1.0 - c));
}

void check_range(const Range& r, const char* name, bool positive = false) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min > r.max || (positive && !(r.min > 0.0)))
    throw ConfigError(std::string("scene config: bad range for ") + name);
}

}  // namespace

double Range::draw(Rng& rng) const {
  if (min == max) return min;
  return std::uniform_real_distribution<double>(min, max)(rng);
}

void SceneConfig::validate() const {
  if (width < 2 || height < 2) throw ConfigError("scene config: image must be at least 2x2");
  check_range(focal, "focal", true);
  check_range(principal_offset, "principal_offset");
  if (min_persons < 1 || max_persons < min_persons) throw ConfigError("scene config: bad person count range");
  check_range(root_depth, "root_depth", true);
  if (annotated_root_depth) check_range(*annotated_root_depth, "annotated_root_depth", true);
  check_range(camera_height, "camera_height");
  if (min_occluders < 0 || max_occluders < min_occluders) throw ConfigError("scene config: bad occluder count range");
  check_range(occluder_size, "occluder_size", true);
  check_range(occluder_gap, "occluder_gap", true);
  check_range(person_scale, "person_scale", true);
  for (double r : {limb_radius, torso_radius, head_radius, occluder_thickness})
    if (!(r > 0.0)) throw ConfigError("scene config: radii and thickness must be positive");
  if (!(bone_jitter >= 0.0 && bone_jitter < 1.0)) throw ConfigError("scene config: bone_jitter must be in [0, 1)");
  for (double p : {sitting_probability, hole_probability, detection_miss_probability})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("scene config: probabilities must be in [0, 1]");
  for (double s : {sensor_noise_mm, detector_noise_px, occlusion_margin_mm, estimate_scale_sigma,
                   estimate_noise_mm, min_person_spacing, background_depth})
    if (!(s >= 0.0)) throw ConfigError("scene config: noise levels and distances must be non-negative");
}

nlohmann::json to_json(const SceneConfig& c) {
  auto range = [](const Range& r) { return nlohmann::json::array({r.min, r.max}); };
  nlohmann::json j = {{"width", c.width},
                      {"height", c.height},
                      {"focal", range(c.focal)},
                      {"principal_offset", range(c.principal_offset)},
                      {"min_persons", c.min_persons},
                      {"max_persons", c.max_persons},
                      {"root_depth", range(c.root_depth)},
                      {"camera_height", range(c.camera_height)},
                      {"min_occluders", c.min_occluders},
                      {"max_occluders", c.max_occluders},
                      {"occluder_size", range(c.occluder_size)},
                      {"occluder_gap", range(c.occluder_gap)},
                      {"occluder_thickness", c.occluder_thickness},
                      {"limb_radius", c.limb_radius},
                      {"torso_radius", c.torso_radius},
                      {"head_radius", c.head_radius},
                      {"person_scale", range(c.person_scale)},
                      {"bone_jitter", c.bone_jitter},
                      {"sitting_probability", c.sitting_probability},
                      {"min_person_spacing", c.min_person_spacing},
                      {"background_depth", c.background_depth},
                      {"sensor_noise_mm", c.sensor_noise_mm},
                      {"hole_probability", c.hole_probability},
                      {"detector_noise_px", c.detector_noise_px},
                      {"occlusion_margin_mm", c.occlusion_margin_mm},
                      {"estimate_scale_sigma", c.estimate_scale_sigma},
                      {"estimate_noise_mm", c.estimate_noise_mm},
                      {"detection_miss_probability", c.detection_miss_probability}};
  if (c.annotated_root_depth) j["annotated_root_depth"] = range(*c.annotated_root_depth);
  return j;
}

SceneConfig scene_config_from_json(const nlohmann::json& doc) {
  SceneConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    auto get_range = [&](const char* key, Range& r) {
      if (!doc.contains(key)) return;
      const auto v = doc.at(key).get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError(std::string("scene config: ") + key + " needs [min, max]");
      r = {v[0], v[1]};
    };
    get("width", c.width);
    get("height", c.height);
    get_range("focal", c.focal);
    get_range("principal_offset", c.principal_offset);
    get("min_persons", c.min_persons);
    get("max_persons", c.max_persons);
    get_range("root_depth", c.root_depth);
    if (doc.contains("annotated_root_depth")) {
      Range r;
      get_range("annotated_root_depth", r);
      c.annotated_root_depth = r;
    }
    get_range("camera_height", c.camera_height);
    get("min_occluders", c.min_occluders);
    get("max_occluders", c.max_occluders);
    get_range("occluder_size", c.occluder_size);
    get_range("occluder_gap", c.occluder_gap);
    get("occluder_thickness", c.occluder_thickness);
    get("limb_radius", c.limb_radius);
    get("torso_radius", c.torso_radius);
    get("head_radius", c.head_radius);
    get_range("person_scale", c.person_scale);
    get("bone_jitter", c.bone_jitter);
    get("sitting_probability", c.sitting_probability);
    get("min_person_spacing", c.min_person_spacing);
    get("background_depth", c.background_depth);
    get("sensor_noise_mm", c.sensor_noise_mm);
    get("hole_probability", c.hole_probability);
    get("detector_noise_px", c.detector_noise_px);
    get("occlusion_margin_mm", c.occlusion_margin_mm);
    get("estimate_scale_sigma", c.estimate_scale_sigma);
    get("estimate_noise_mm", c.estimate_noise_mm);
    get("detection_miss_probability", c.detection_miss_probability);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scene config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Ray casting. Rays start at the camera center; depths are optical-axis z.

namespace {

// Distance along the unit ray `rd` to the front surface of a capsule, or -1.
double ray_capsule(const Point3D& rd, const Capsule& c) {
  const Point3D ba = c.b - c.a;
  const Point3D oa = Point3D{} - c.a;
  const double r2 = c.radius * c.radius;
  const double baba = dot(ba, ba);
  if (baba < 1e-12) {
    const double b = dot(rd, oa);
    const double h = b * b - (dot(oa, oa) - r2);
    return h > 0.0 ? -b - std::sqrt(h) : -1.0;
  }
  const double bard = dot(ba, rd);
  const double baoa = dot(ba, oa);
  const double rdoa = dot(rd, oa);
  const double oaoa = dot(oa, oa);
  const double a = baba - bard * bard;
  double b = baba * rdoa - baoa * bard;
  double c2 = baba * oaoa - baoa * baoa - r2 * baba;
  double h = b * b - a * c2;
  if (h < 0.0) return -1.0;
  if (a > 1e-12) {
    const double t = (-b - std::sqrt(h)) / a;
    const double y = baoa + t * bard;
    if (y > 0.0 && y < baba) return t;
    const Point3D oc = y <= 0.0 ? oa : Point3D{} - c.b;
    b = dot(rd, oc);
    c2 = dot(oc, oc) - r2;
    h = b * b - c2;
    return h > 0.0 ? -b - std::sqrt(h) : -1.0;
  }
  // Ray parallel to the axis: only the caps can be hit first.
  double best = -1.0;
  for (const Point3D& end : {c.a, c.b}) {
    const Point3D oc = Point3D{} - end;
    b = dot(rd, oc);
    h = b * b - (dot(oc, oc) - r2);
    if (h > 0.0) {
      const double t = -b - std::sqrt(h);
      if (t > 0.0 && (best < 0.0 || t < best)) best = t;
    }
  }
  return best;
}

// Entry distance along `d` (any length) into an axis-aligned box, or -1.
double ray_box(const Point3D& d, const Box& box) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  const double dirs[3] = {d.x, d.y, d.z};
  const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
  const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
  for (int k = 0; k < 3; ++k) {
    if (std::abs(dirs[k]) < 1e-300) {
      if (0.0 < lo[k] || 0.0 > hi[k]) return -1.0;
      continue;
    }
    double t0 = lo[k] / dirs[k];
    double t1 = hi[k] / dirs[k];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  }
  if (tmax < tmin || tmin <= 0.0) return -1.0;
  return tmin;
}

Point3D pixel_ray(const CameraIntrinsics& cam, double u, double v) {
  return {(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
}

// Optical-axis depth of one capsule along the ray through (u, v), or NaN.
double capsule_depth(const Point3D& d, double inv_len, const Capsule& c) {
  const double t = ray_capsule(d * inv_len, c);
  return t > 0.0 ? t * inv_len : kNaN;
}

double box_depth(const Point3D& d, const Box& b) {
  const double t = ray_box(d, b);
  return t > 0.0 ? t : kNaN;  // d.z == 1, so t is the depth
}

inline void keep_min(double& best, double candidate) {
  if (!std::isnan(candidate) && (std::isnan(best) || candidate < best)) best = candidate;
}

struct PixelRect {
  long u0 = 0, u1 = -1, v0 = 0, v1 = -1;
};

// Pixel bounds of a 3D axis-aligned box; the whole image if it reaches
// behind the camera plane.
PixelRect screen_rect(const Point3D& lo, const Point3D& hi, const CameraIntrinsics& cam, std::size_t w,
                      std::size_t h) {
  const long W = static_cast<long>(w), H = static_cast<long>(h);
  if (lo.z <= 1e-6) return {0, W - 1, 0, H - 1};
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  double vmin = umin, vmax = -umin;
  for (int k = 0; k < 8; ++k) {
    const Point3D p{(k & 1) ? hi.x : lo.x, (k & 2) ? hi.y : lo.y, (k & 4) ? hi.z : lo.z};
    const double u = cam.fx * p.x / p.z + cam.cx;
    const double v = cam.fy * p.y / p.z + cam.cy;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  PixelRect r;
  r.u0 = std::max(0L, static_cast<long>(std::floor(umin)) - 1);
  r.u1 = std::min(W - 1, static_cast<long>(std::ceil(umax)) + 1);
  r.v0 = std::max(0L, static_cast<long>(std::floor(vmin)) - 1);
  r.v1 = std::min(H - 1, static_cast<long>(std::ceil(vmax)) + 1);
  return r;
}

std::vector<float> to_float(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace

double trace_depth(const SceneGeometry& g, const CameraIntrinsics& cam, const Point2D& pixel) {
  const Point3D d = pixel_ray(cam, pixel.x, pixel.y);
  const double inv_len = 1.0 / norm(d);
  double best = kNaN;
  for (const auto& c : g.capsules) keep_min(best, capsule_depth(d, inv_len, c));
  for (const auto& b : g.boxes) keep_min(best, box_depth(d, b));
  if (g.wall_depth > 0.0) keep_min(best, g.wall_depth);
  return best;
}

DepthMap render_clean_serial(const SceneGeometry& g, const CameraIntrinsics& cam, std::size_t width,
                             std::size_t height) {
  cam.validate();
  std::vector<double> depth(width * height);
  for (std::size_t v = 0; v < height; ++v)
    for (std::size_t u = 0; u < width; ++u)
      depth[v * width + u] = trace_depth(g, cam, {static_cast<double>(u), static_cast<double>(v)});
  return DepthMap(width, height, to_float(depth));
}

DepthMap render_clean(const SceneGeometry& g, const CameraIntrinsics& cam, std::size_t width,
                      std::size_t height) {
  cam.validate();
  std::vector<PixelRect> capsule_rects, box_rects;
  for (const auto& c : g.capsules) {
    const Point3D r{c.radius, c.radius, c.radius};
    const Point3D lo{std::min(c.a.x, c.b.x), std::min(c.a.y, c.b.y), std::min(c.a.z, c.b.z)};
    const Point3D hi{std::max(c.a.x, c.b.x), std::max(c.a.y, c.b.y), std::max(c.a.z, c.b.z)};
    capsule_rects.push_back(screen_rect(lo - r, hi + r, cam, width, height));
  }
  for (const auto& b : g.boxes) box_rects.push_back(screen_rect(b.lo, b.hi, cam, width, height));

  std::vector<double> depth(width * height, g.wall_depth > 0.0 ? g.wall_depth : kNaN);
#pragma omp parallel for schedule(dynamic, 4)
  for (long v = 0; v < static_cast<long>(height); ++v) {
    double* row = &depth[static_cast<std::size_t>(v) * width];
    for (std::size_t k = 0; k < g.capsules.size(); ++k) {
      const PixelRect& r = capsule_rects[k];
      if (v < r.v0 || v > r.v1) continue;
      for (long u = r.u0; u <= r.u1; ++u) {
        const Point3D d = pixel_ray(cam, static_cast<double>(u), static_cast<double>(v));
        keep_min(row[u], capsule_depth(d, 1.0 / norm(d), g.capsules[k]));
      }
    }
    for (std::size_t k = 0; k < g.boxes.size(); ++k) {
      const PixelRect& r = box_rects[k];
      if (v < r.v0 || v > r.v1) continue;
      for (long u = r.u0; u <= r.u1; ++u)
        keep_min(row[u], box_depth(pixel_ray(cam, static_cast<double>(u), static_cast<double>(v)), g.boxes[k]));
    }
  }
  return DepthMap(width, height, to_float(depth));
}

DepthMap add_sensor_noise(const DepthMap& clean, double sigma_mm, double hole_probability, Rng& rng) {
  DepthMap out = clean;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (float& v : out.values()) {
    const double n = noise(rng) * sigma_mm;
    const bool hole = unit(rng) < hole_probability;
    if (std::isnan(v)) continue;
    v = hole ? std::numeric_limits<float>::quiet_NaN() : static_cast<float>(std::max(1.0, v + n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bodies.

namespace {

struct BoneModel {
  const char* joint;
  double length;
  Point3D standing;
  Point3D sitting;
  double sigma;  // rad, per-axis rotation noise
};

constexpr Point3D kUp{0, -1, 0};
constexpr Point3D kDown{0, 1, 0};
constexpr Point3D kRight{-1, 0, 0};  // the person's right, facing the camera
constexpr Point3D kLeft{1, 0, 0};
constexpr Point3D kForward{0, 0, -1};

constexpr std::array<BoneModel, 16> kBones = {{
    {"spine", 250, kUp, kUp, 0.10},
    {"neck", 250, kUp, kUp, 0.10},
    {"head", 130, kUp, kUp, 0.15},
    {"head_top", 110, kUp, kUp, 0.10},
    {"right_shoulder", 170, kRight, kRight, 0.05},
    {"left_shoulder", 170, kLeft, kLeft, 0.05},
    {"right_elbow", 290, kDown, kDown, 0.70},
    {"left_elbow", 290, kDown, kDown, 0.70},
    {"right_wrist", 260, kDown, kDown, 0.70},
    {"left_wrist", 260, kDown, kDown, 0.70},
    {"right_hip", 110, kRight, kRight, 0.05},
    {"left_hip", 110, kLeft, kLeft, 0.05},
    {"right_knee", 440, kDown, kForward, 0.15},
    {"left_knee", 440, kDown, kForward, 0.15},
    {"right_ankle", 420, kDown, kDown, 0.15},
    {"left_ankle", 420, kDown, kDown, 0.15},
}};

const BoneModel& bone_model(const SkeletonSpec& spec, std::size_t joint) {
  const auto& name = spec.names.at(joint);
  for (const auto& b : kBones)
    if (name == b.joint) return b;
  throw ConfigError("synthetic bodies have no bone model for joint '" + name + "'");
}

// Joints ordered so every parent precedes its children.
std::vector<std::size_t> topological_order(const SkeletonSpec& spec) {
  std::vector<std::size_t> order{spec.root};
  for (std::size_t k = 0; k < order.size(); ++k)
    for (std::size_t j = 0; j < spec.joint_count(); ++j)
      if (spec.parents[j] == static_cast<int>(order[k])) order.push_back(j);
  return order;
}

enum class Part { Limb, Torso, Head };

Part bone_part(const std::string& child) {
  if (child == "spine" || child == "neck") return Part::Torso;
  if (child == "head_top") return Part::Head;
  return Part::Limb;
}

double part_radius(Part p, const SceneConfig& c) {
  switch (p) {
    case Part::Torso: return c.torso_radius;
    case Part::Head: return c.head_radius;
    default: return c.limb_radius;
  }
}

}  // namespace

double canonical_bone_length(const SkeletonSpec& spec, std::size_t joint) {
  return joint == spec.root ? 0.0 : bone_model(spec, joint).length;
}

Range bone_length_bounds(const SceneConfig& config, const SkeletonSpec& spec, std::size_t joint) {
  const double len = canonical_bone_length(spec, joint);
  return {len * config.person_scale.min * (1.0 - config.bone_jitter),
          len * config.person_scale.max * (1.0 + config.bone_jitter)};
}

Pose3D generate_pose(Rng& rng, const SkeletonSpec& spec, const SceneConfig& config) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = config.person_scale.draw(rng);
  const bool sitting = unit(rng) < config.sitting_probability;

  Pose3D pose(spec.joint_count());
  for (std::size_t j : topological_order(spec)) {
    if (j == spec.root) continue;
    const BoneModel& bone = bone_model(spec, j);
    const Point3D w{gauss(rng) * bone.sigma, gauss(rng) * bone.sigma, gauss(rng) * bone.sigma};
    const Point3D dir = rotate(sitting ? bone.sitting : bone.standing, w);
    const double jitter = 1.0 + config.bone_jitter * (2.0 * unit(rng) - 1.0);
    pose[j] = pose[static_cast<std::size_t>(spec.parents[j])] + dir * (bone.length * scale * jitter);
  }

  const double yaw = (2.0 * unit(rng) - 1.0) * std::numbers::pi;
  const Point3D tilt{gauss(rng) * 0.05, yaw, gauss(rng) * 0.05};
  for (auto& p : pose) p = rotate(rotate(p, {0.0, tilt.y, 0.0}), {tilt.x, 0.0, tilt.z});
  return pose;
}

std::vector<Capsule> body_capsules(const Pose3D& pose, const SkeletonSpec& spec, const SceneConfig& config) {
  std::vector<Capsule> out;
  for (std::size_t j = 0; j < spec.joint_count(); ++j) {
    if (j == spec.root) continue;
    const auto parent = static_cast<std::size_t>(spec.parents[j]);
    out.push_back({pose[parent], pose[j], part_radius(bone_part(spec.names[j]), config)});
  }
  return out;
}

std::vector<double> joint_radii(const SkeletonSpec& spec, const SceneConfig& config) {
  std::vector<double> r(spec.joint_count(), 0.0);
  for (std::size_t j = 0; j < spec.joint_count(); ++j) {
    if (j == spec.root) continue;
    const auto parent = static_cast<std::size_t>(spec.parents[j]);
    const double radius = part_radius(bone_part(spec.names[j]), config);
    r[j] = std::max(r[j], radius);
    r[parent] = std::max(r[parent], radius);
  }
  return r;
}

std::vector<std::uint8_t> joint_visibility(const Pose3D& pose, const DepthMap& clean,
                                           const CameraIntrinsics& cam, std::span<const double> radii,
                                           double margin_mm) {
  std::vector<std::uint8_t> visible(pose.size(), 0);
  for (std::size_t j = 0; j < pose.size(); ++j) {
    if (!(pose[j].z > 0.0)) continue;
    const Point2D px = project(pose[j], cam);
    const double d = sample_bilinear(clean, px);
    if (std::isnan(d)) continue;
    visible[j] = d >= pose[j].z - radii[j] - margin_mm ? 1 : 0;
  }
  return visible;
}

Scene generate_scene(Rng& rng, const SceneConfig& config, const SkeletonSpec& spec, int person_count,
                     const Range& root_depth) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Scene s;
  s.width = config.width;
  s.height = config.height;
  const double f = config.focal.draw(rng);
  s.camera = {f, f, (static_cast<double>(config.width) - 1.0) / 2.0 + config.principal_offset.draw(rng),
              (static_cast<double>(config.height) - 1.0) / 2.0 + config.principal_offset.draw(rng)};
  const double floor_y = config.camera_height.draw(rng);
  const double W = static_cast<double>(config.width), H = static_cast<double>(config.height);

  for (int p = 0; p < person_count; ++p) {
    Pose3D placed;
    for (int attempt = 0; attempt < 50; ++attempt) {
      const Pose3D body = generate_pose(rng, spec, config);
      const double z = root_depth.draw(rng);
      const double u = (0.15 + 0.7 * unit(rng)) * W;
      double lowest = -std::numeric_limits<double>::infinity();
      for (const auto& q : body) lowest = std::max(lowest, q.y);
      const Point3D root{(u - s.camera.cx) / s.camera.fx * z, floor_y - lowest - config.limb_radius, z};
      Pose3D candidate(body.size());
      for (std::size_t j = 0; j < body.size(); ++j) candidate[j] = body[j] + root;

      bool ok = true;
      for (const auto& other : s.poses) {
        const Point3D d = other[spec.root] - root;
        if (std::hypot(d.x, d.z) < config.min_person_spacing) ok = false;
      }
      for (const auto& q : candidate) {
        if (q.z < 300.0) {
          ok = false;
          break;
        }
        const Point2D px = project(q, s.camera);
        if (px.x < 1.0 || px.y < 1.0 || px.x > W - 2.0 || px.y > H - 2.0) ok = false;
      }
      placed = std::move(candidate);
      if (ok) break;
    }
    s.poses.push_back(std::move(placed));
  }

  for (const auto& pose : s.poses) {
    auto caps = body_capsules(pose, spec, config);
    s.geometry.capsules.insert(s.geometry.capsules.end(), caps.begin(), caps.end());
  }
  const int n_occ = std::uniform_int_distribution<int>(config.min_occluders, config.max_occluders)(rng);
  for (int k = 0; k < n_occ && !s.poses.empty(); ++k) {
    const auto& target = s.poses[std::uniform_int_distribution<std::size_t>(0, s.poses.size() - 1)(rng)];
    const Point3D& joint = target[std::uniform_int_distribution<std::size_t>(0, target.size() - 1)(rng)];
    const double zc = joint.z - config.occluder_gap.draw(rng);
    const double w = config.occluder_size.draw(rng);
    const double h = config.occluder_size.draw(rng);
    if (zc - config.occluder_thickness / 2.0 < 500.0) continue;
    const Point3D c{joint.x / joint.z * zc, joint.y / joint.z * zc, zc};
    const Point3D half{w / 2.0, h / 2.0, config.occluder_thickness / 2.0};
    s.geometry.boxes.push_back({c - half, c + half});
  }
  s.geometry.wall_depth = config.background_depth;

  s.clean_depth = render_clean(s.geometry, s.camera, s.width, s.height);
  s.sensor_depth = add_sensor_noise(s.clean_depth, config.sensor_noise_mm, config.hole_probability, rng);

  const auto radii = joint_radii(spec, config);
  for (const auto& pose : s.poses) {
    s.clean_2d.push_back(project(pose, s.camera));
    s.visible.push_back(joint_visibility(pose, s.clean_depth, s.camera, radii, config.occlusion_margin_mm));
  }
  s.estimate_scale = std::clamp(1.0 + config.estimate_scale_sigma * gauss(rng), 0.5, 1.5);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

struct FramePlan {
  Split split;
  std::size_t index;
  int persons;
};

struct FrameResult {
  std::string id;
  Split split;
  std::vector<PersonSample> samples;
  FramePoses gt;
  std::optional<DepthMap> depth;
};

std::string frame_name(Split split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06zu", to_string(split), index);
  return buf;
}

FrameResult make_frame(std::uint64_t seed, const FramePlan& plan, const SceneConfig& config,
                       const SkeletonSpec& spec, bool keep_depth_maps) {
  const std::uint64_t stream = (static_cast<std::uint64_t>(plan.split) << 40) | plan.index;
  Rng rng = make_rng(seed, stream);
  const Range depth_range = plan.split == Split::Annotated && config.annotated_root_depth
                                ? *config.annotated_root_depth
                                : config.root_depth;
  Scene scene = generate_scene(rng, config, spec, plan.persons, depth_range);

  FrameResult out;
  out.id = frame_name(plan.split, plan.index);
  out.split = plan.split;
  out.gt = {out.id, scene.poses};
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t p = 0; p < scene.poses.size(); ++p) {
    PersonSample s;
    s.frame_id = out.id;
    s.split = plan.split;
    s.camera = scene.camera;
    s.image_width = scene.width;
    s.image_height = scene.height;
    s.depth_path = "depth/" + out.id + ".dmap";
    s.visible = scene.visible[p];
    for (const auto& q : scene.clean_2d[p])
      s.view.joints_2d.push_back(
          {q.x + config.detector_noise_px * gauss(rng), q.y + config.detector_noise_px * gauss(rng)});
    s.view.depth_targets = read_depth_at(scene.sensor_depth, s.view.joints_2d);
    s.view.depth_features = read_depth_at(scene.clean_depth, s.view.joints_2d);
    for (double& d : s.view.depth_features.mm) {
      const double noise = config.estimate_noise_mm * gauss(rng);
      if (!std::isnan(d)) d = std::max(1.0, d * scene.estimate_scale + noise);
    }
    if (plan.split == Split::Annotated) s.view.joints_3d = scene.poses[p];
    const bool missed = plan.split == Split::Test && unit(rng) < config.detection_miss_probability;
    if (!missed) out.samples.push_back(std::move(s));
  }
  if (keep_depth_maps) out.depth = std::move(scene.sensor_depth);
  return out;
}

}  // namespace

SyntheticDataset generate_dataset(std::uint64_t seed, const SceneConfig& config, const SkeletonSpec& spec,
                                  const DatasetCounts& counts, bool keep_depth_maps) {
  config.validate();
  spec.validate();

  std::vector<FramePlan> plans;
  const std::pair<Split, std::size_t> wanted[] = {
      {Split::Annotated, counts.annotated}, {Split::Weak, counts.weak}, {Split::Test, counts.test}};
  for (const auto& [split, count] : wanted) {
    std::size_t remaining = count;
    for (std::size_t index = 0; remaining > 0; ++index) {
      Rng sizer = make_rng(~seed, (static_cast<std::uint64_t>(split) << 40) | index);
      const int k = std::uniform_int_distribution<int>(config.min_persons, config.max_persons)(sizer);
      const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), remaining);
      plans.push_back({split, index, static_cast<int>(n)});
      remaining -= n;
    }
  }

  std::vector<FrameResult> results(plans.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(plans.size()); ++i) {
    try {
      results[static_cast<std::size_t>(i)] =
          make_frame(seed, plans[static_cast<std::size_t>(i)], config, spec, keep_depth_maps);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  SyntheticDataset out;
  for (auto& r : results) {
    auto& bucket = r.split == Split::Annotated ? out.data.annotated
                   : r.split == Split::Weak    ? out.data.weak
                                               : out.data.test;
    for (auto& s : r.samples) bucket.push_back(std::move(s));
    if (r.split == Split::Test) out.data.test_gt.push_back(r.gt);
    if (r.split == Split::Weak) out.data.weak_gt.push_back(r.gt);
    out.frames.push_back({r.id, r.split, std::move(r.depth)});
  }
  return out;
}

}  // namespace wdpose::synth
