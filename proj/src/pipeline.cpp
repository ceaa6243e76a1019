#include "wdpose/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "wdpose/error.hpp"

namespace wdpose {

namespace {

// Stream ids under the training seed.
constexpr std::uint64_t kStreamPoseInit = 101;
constexpr std::uint64_t kStreamDepthInit = 102;
constexpr std::uint64_t kStreamOrder = 201;
constexpr std::uint64_t kStreamWeakDraw = 202;
constexpr std::uint64_t kStreamZoom = 203;
constexpr std::uint64_t kStreamDropout = 204;

constexpr std::size_t kPredictChunk = 512;

void append_row(nn::Matrix& m, const std::vector<double>& row) {
  if (m.rows == 0) m.cols = row.size();
  if (row.size() != m.cols) throw ShapeError("batch rows have inconsistent widths");
  m.data.insert(m.data.end(), row.begin(), row.end());
  ++m.rows;
}

std::vector<double> standardize(const std::vector<double>& raw, const Standardizer& s) {
  if (raw.size() != s.size()) throw ShapeError("standardizer width mismatch");
  std::vector<double> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k)
    out[k] = std::isnan(raw[k]) ? 0.0 : (raw[k] - s.mean[k]) / s.std[k];
  return out;
}

JointDepthVector subset_targets(const ViewSample& view, const SkeletonSpec& spec) {
  JointDepthVector t;
  t.mm.reserve(spec.depth_subset.size());
  const bool has = view.depth_targets.size() == spec.joint_count();
  for (std::size_t j : spec.depth_subset)
    t.mm.push_back(has ? view.depth_targets.mm[j] : std::numeric_limits<double>::quiet_NaN());
  return t;
}

struct View {
  const ViewSample* view;
  const CameraIntrinsics* cam;
};

Batch assemble(const ModelBundle& bundle, std::span<const View> annotated, std::span<const View> weak) {
  const SkeletonSpec& spec = bundle.skeleton;
  Batch b;
  b.annotated_input.cols = b.weak_input.cols = bundle.posenet.config().input_width;
  for (const auto& v : annotated) {
    if (v.view->joints_3d.size() != spec.joint_count())
      throw InvalidInputError("annotated sample lacks a 3D pose");
    append_row(b.annotated_input, build_input(*v.view, *v.cam, bundle.stats, spec));
    b.annotated_gt.push_back(v.view->joints_3d);
  }
  for (const auto& v : weak) {
    append_row(b.weak_input, build_input(*v.view, *v.cam, bundle.stats, spec));
    b.weak_targets.push_back(subset_targets(*v.view, spec));
  }
  return b;
}

void add_into(std::vector<double>& acc, const std::vector<double>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

Standardizer Standardizer::fit(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw ConfigError("cannot fit a standardizer on zero rows");
  const std::size_t cols = rows.front().size();
  Standardizer s;
  s.mean.assign(cols, 0.0);
  s.std.assign(cols, 0.0);
  for (const auto& r : rows)
    if (r.size() != cols) throw ShapeError("standardizer rows have inconsistent widths");
  for (std::size_t k = 0; k < cols; ++k) {
    std::size_t n = 0;
    double sum = 0.0;
    for (const auto& r : rows)
      if (!std::isnan(r[k])) {
        sum += r[k];
        ++n;
      }
    if (n < 2) throw ConfigError("dimension " + std::to_string(k) + " has fewer than two valid values");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : rows)
      if (!std::isnan(r[k])) ss += (r[k] - mean) * (r[k] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0) || !std::isfinite(sd))
      throw ConfigError("dimension " + std::to_string(k) + " is constant over the training data");
    s.mean[k] = mean;
    s.std[k] = sd;
  }
  return s;
}

std::vector<double> raw_input(const ViewSample& view, const CameraIntrinsics& cam, const SkeletonSpec& spec) {
  const std::size_t J = spec.joint_count();
  if (view.joints_2d.size() != J)
    throw ShapeError("expected " + std::to_string(J) + " 2D joints, got " + std::to_string(view.joints_2d.size()));
  if (view.depth_features.size() == 0) throw InvalidInputError("sample has no depth features");
  if (view.depth_features.size() != J) throw ShapeError("depth feature count differs from the joint count");
  std::vector<double> out;
  out.reserve(3 * J);
  for (const auto& p : normalize_2d(view.joints_2d, cam)) {
    out.push_back(p.x);
    out.push_back(p.y);
  }
  out.insert(out.end(), view.depth_features.mm.begin(), view.depth_features.mm.end());
  return out;
}

std::vector<double> raw_target(const Pose3D& pose, const SkeletonSpec& spec) {
  if (pose.size() != spec.joint_count()) throw ShapeError("pose has the wrong joint count");
  const PoseDecomposition d = decompose(pose, spec);
  std::vector<double> out{d.root.x, d.root.y, d.root.z};
  for (const auto& r : d.relative) {
    out.push_back(r.x);
    out.push_back(r.y);
    out.push_back(r.z);
  }
  return out;
}

StandardizerStats fit_standardizer(std::span<const PersonSample> annotated, const SkeletonSpec& spec,
                                   std::span<const PersonSample> weak) {
  if (annotated.size() < 2) throw ConfigError("standardization needs at least two annotated samples");
  std::vector<std::vector<double>> inputs, outputs;
  for (const auto& s : annotated) {
    inputs.push_back(raw_input(s.view, s.camera, spec));
    if (s.view.joints_3d.size() != spec.joint_count())
      throw InvalidInputError("annotated sample " + s.frame_id + " lacks a 3D pose");
    outputs.push_back(raw_target(s.view.joints_3d, spec));
  }
  StandardizerStats stats;
  stats.input = Standardizer::fit(inputs);
  stats.output = Standardizer::fit(outputs);

  std::vector<std::vector<double>> depth_rows;
  for (auto group : {annotated, weak})
    for (const auto& s : group) depth_rows.push_back(subset_targets(s.view, spec).mm);
  const std::size_t S = spec.depth_subset.size();
  stats.depth.mean.assign(S, stats.output.mean[2]);
  stats.depth.std.assign(S, stats.output.std[2]);
  for (std::size_t k = 0; k < S; ++k) {
    std::vector<std::vector<double>> column;
    for (const auto& r : depth_rows) column.push_back({r[k]});
    try {
      const Standardizer c = Standardizer::fit(column);
      stats.depth.mean[k] = c.mean[0];
      stats.depth.std[k] = c.std[0];
    } catch (const ConfigError&) {
      // keep the root-depth fallback
    }
  }
  return stats;
}

std::vector<double> build_input(const ViewSample& view, const CameraIntrinsics& cam,
                                const StandardizerStats& stats, const SkeletonSpec& spec) {
  return standardize(raw_input(view, cam, spec), stats.input);
}

std::vector<double> build_input(std::span<const Point2D> joints_2d, const CameraIntrinsics& cam,
                                const DepthMap& depth_features, const StandardizerStats& stats,
                                const SkeletonSpec& spec) {
  ViewSample v;
  v.joints_2d.assign(joints_2d.begin(), joints_2d.end());
  v.depth_features = read_depth_at(depth_features, joints_2d);
  return build_input(v, cam, stats, spec);
}

Pose3D decode_output(std::span<const double> output, const StandardizerStats& stats, const SkeletonSpec& spec) {
  const std::size_t J = spec.joint_count();
  if (output.size() != 3 * J || stats.output.size() != 3 * J) throw ShapeError("PoseNet output width mismatch");
  std::vector<double> v(output.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = output[k] * stats.output.std[k] + stats.output.mean[k];
  PoseDecomposition d;
  d.root = {v[0], v[1], v[2]};
  for (std::size_t k = 1; k < J; ++k) d.relative.push_back({v[3 * k], v[3 * k + 1], v[3 * k + 2]});
  return compose(d, spec);
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and at least 2");
  RobustLossConfig{alpha, lambda}.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0, 1]");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be at least 1");
  if (!(zoom_min > 0.0) || !(zoom_max >= zoom_min) || !std::isfinite(zoom_max))
    throw ConfigError("zoom range must satisfy 0 < zoom_min <= zoom_max");
  if (hidden_width == 0 || depth_hidden_width == 0) throw ConfigError("hidden widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lambda", c.lambda},
          {"alpha", c.alpha},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"lr_decay_every", c.lr_decay_every},
          {"zoom_min", c.zoom_min},
          {"zoom_max", c.zoom_max},
          {"seed", c.seed},
          {"hidden_width", c.hidden_width},
          {"depth_hidden_width", c.depth_hidden_width},
          {"residual_blocks", c.residual_blocks},
          {"dropout", c.dropout},
          {"stop_gradient", c.stop_gradient},
          {"data_dir", c.data_dir}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  const std::set<std::string> known = [] {
    std::set<std::string> k;
    const nlohmann::json defaults = to_json(TrainConfig{});
    for (const auto& [key, value] : defaults.items()) k.insert(key);
    return k;
  }();
  for (const auto& [key, value] : doc.items())
    if (!known.count(key)) throw ConfigError("unknown train config key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lambda", c.lambda);
    get("alpha", c.alpha);
    get("learning_rate", c.learning_rate);
    get("lr_decay", c.lr_decay);
    get("lr_decay_every", c.lr_decay_every);
    get("zoom_min", c.zoom_min);
    get("zoom_max", c.zoom_max);
    get("seed", c.seed);
    get("hidden_width", c.hidden_width);
    get("depth_hidden_width", c.depth_hidden_width);
    get("residual_blocks", c.residual_blocks);
    get("dropout", c.dropout);
    get("stop_gradient", c.stop_gradient);
    get("data_dir", c.data_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

void ModelBundle::validate() const {
  const std::size_t J = skeleton.joint_count();
  const auto& p = posenet.config();
  const auto& d = jdn.config();
  if (p.input_width != 3 * J || p.output_width != 3 * J)
    throw ShapeError("PoseNet widths do not match the skeleton");
  if (d.input_width != p.output_width || d.output_width != skeleton.depth_subset.size())
    throw ShapeError("JointDepthNet widths do not match PoseNet and the depth subset");
  if (stats.input.size() != 3 * J || stats.output.size() != 3 * J ||
      stats.depth.size() != skeleton.depth_subset.size())
    throw ShapeError("standardizer widths do not match the networks");
}

ModelBundle make_bundle(const SkeletonSpec& spec, StandardizerStats stats, const TrainConfig& config) {
  const std::size_t J = spec.joint_count();
  nn::MlpConfig pose{3 * J, 3 * J, config.hidden_width, config.residual_blocks, config.dropout};
  nn::MlpConfig depth{3 * J, spec.depth_subset.size(), config.depth_hidden_width, config.residual_blocks,
                      config.dropout};
  ModelBundle b{spec, std::move(stats), nn::Mlp::initialized(pose, derive_seed(config.seed, kStreamPoseInit)),
                nn::Mlp::initialized(depth, derive_seed(config.seed, kStreamDepthInit))};
  b.validate();
  return b;
}

namespace {

nlohmann::json to_json(const Standardizer& s) { return {{"mean", s.mean}, {"std", s.std}}; }

Standardizer standardizer_from_json(const nlohmann::json& doc) {
  Standardizer s{doc.at("mean").get<std::vector<double>>(), doc.at("std").get<std::vector<double>>()};
  if (s.mean.size() != s.std.size()) throw FormatError("standardizer mean and std differ in length");
  for (double v : s.std)
    if (!(v > 0.0)) throw FormatError("standardizer std must be positive");
  return s;
}

}  // namespace

nlohmann::json to_json(const ModelBundle& b) {
  return {{"version", kBundleVersion},
          {"skeleton", to_json(b.skeleton)},
          {"stats", {{"input", to_json(b.stats.input)}, {"output", to_json(b.stats.output)}, {"depth", to_json(b.stats.depth)}}},
          {"posenet", nn::to_json(b.posenet)},
          {"jdn", nn::to_json(b.jdn)}};
}

ModelBundle bundle_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.contains("version")) throw FormatError("model file has no version field");
    const int version = doc.at("version").get<int>();
    if (version != kBundleVersion) throw FormatError("unsupported model version " + std::to_string(version));
    const auto& st = doc.at("stats");
    ModelBundle b{skeleton_from_json(doc.at("skeleton")),
                  {standardizer_from_json(st.at("input")), standardizer_from_json(st.at("output")),
                   standardizer_from_json(st.at("depth"))},
                  nn::mlp_from_json(doc.at("posenet")),
                  nn::mlp_from_json(doc.at("jdn"))};
    b.validate();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent model file: ") + e.what());
  }
}

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(bundle).dump() << '\n';
  if (!out) throw IoError("failed writing " + path);
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return bundle_from_json(doc);
}

// ---------------------------------------------------------------------------

std::vector<Pose3D> predict(const ModelBundle& bundle, std::span<const PersonSample> samples) {
  std::vector<Pose3D> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += kPredictChunk) {
    const std::size_t end = std::min(samples.size(), start + kPredictChunk);
    nn::Matrix x;
    x.cols = bundle.posenet.config().input_width;
    for (std::size_t i = start; i < end; ++i)
      append_row(x, build_input(samples[i].view, samples[i].camera, bundle.stats, bundle.skeleton));
    const nn::Matrix y = bundle.posenet.forward(x, nn::Mode::Eval, 0);
    for (std::size_t r = 0; r < y.rows; ++r) out.push_back(decode_output(y.row(r), bundle.stats, bundle.skeleton));
  }
  return out;
}

std::vector<FramePoses> predict_frames(const ModelBundle& bundle, std::span<const PersonSample> samples) {
  const auto poses = predict(bundle, samples);
  std::vector<FramePoses> frames;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [it, inserted] = index.try_emplace(samples[i].frame_id, frames.size());
    if (inserted) frames.push_back({samples[i].frame_id, {}});
    frames[it->second].poses.push_back(poses[i]);
  }
  return frames;
}

Batch make_batch(const ModelBundle& bundle, std::span<const PersonSample> annotated,
                 std::span<const PersonSample> weak) {
  std::vector<View> a, w;
  for (const auto& s : annotated) a.push_back({&s.view, &s.camera});
  for (const auto& s : weak) w.push_back({&s.view, &s.camera});
  return assemble(bundle, a, w);
}

BatchResult evaluate_batch(const ModelBundle& bundle, const Batch& batch, const RobustLossConfig& loss,
                           nn::Mode mode, std::uint64_t seed, bool stop_gradient, std::uint64_t* signature) {
  const SkeletonSpec& spec = bundle.skeleton;
  const std::size_t J = spec.joint_count();
  const StandardizerStats& stats = bundle.stats;
  if (batch.annotated_gt.size() != batch.annotated_input.rows || batch.weak_targets.size() != batch.weak_input.rows)
    throw ShapeError("batch inputs and targets differ in length");

  BatchResult r;
  r.posenet_grad.assign(bundle.posenet.parameter_count(), 0.0);
  r.jdn_grad.assign(bundle.jdn.parameter_count(), 0.0);

  std::vector<Pose3D> pred;
  nn::Mlp::Cache pose_cache;
  if (batch.annotated_input.rows > 0) {
    const nn::Matrix y = bundle.posenet.forward(batch.annotated_input, mode, derive_seed(seed, 1), &pose_cache);
    for (std::size_t i = 0; i < y.rows; ++i) pred.push_back(decode_output(y.row(i), stats, spec));
  }

  std::vector<WeakDepthTerm> terms;
  nn::Mlp::Cache weak_cache, depth_cache;
  if (batch.weak_input.rows > 0) {
    const nn::Matrix y = bundle.posenet.forward(batch.weak_input, mode, derive_seed(seed, 2), &weak_cache);
    const nn::Matrix d = bundle.jdn.forward(y, mode, derive_seed(seed, 3), &depth_cache);
    for (std::size_t i = 0; i < d.rows; ++i) {
      WeakDepthTerm t;
      t.target = batch.weak_targets[i];
      for (std::size_t k = 0; k < d.cols; ++k) t.predicted_mm.push_back(d(i, k) * stats.depth.std[k] + stats.depth.mean[k]);
      terms.push_back(std::move(t));
    }
  }

  TotalLoss total = total_loss(pred, batch.annotated_gt, terms, loss);

  if (signature) {
    // ReLU patterns plus the sign pattern of the L1 residuals: the objective
    // is smooth wherever all of them are fixed.
    std::uint64_t sig = 0;
    if (!pred.empty()) sig = nn::activation_signature(pose_cache, sig);
    for (std::size_t i = 0; i < pred.size(); ++i)
      for (std::size_t j = 0; j < J; ++j) {
        const Point3D d = pred[i][j] - batch.annotated_gt[i][j];
        sig = derive_seed(sig, (d.x > 0.0) | (d.y > 0.0) << 1 | (d.z > 0.0) << 2);
      }
    if (!terms.empty()) sig = nn::activation_signature(depth_cache, nn::activation_signature(weak_cache, sig));
    *signature = sig;
  }
  r.value = total.value;
  r.pose_term = total.pose_term;
  r.depth_term = total.depth_term;

  if (!pred.empty()) {
    nn::Matrix dy(pred.size(), 3 * J);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const Pose3D& g = total.pose_grad[i];
      Point3D root_grad;
      for (const auto& p : g) root_grad = root_grad + p;
      std::vector<double> dv{root_grad.x, root_grad.y, root_grad.z};
      for (std::size_t j = 0; j < J; ++j) {
        if (j == spec.root) continue;
        dv.push_back(g[j].x);
        dv.push_back(g[j].y);
        dv.push_back(g[j].z);
      }
      for (std::size_t k = 0; k < dv.size(); ++k) dy(i, k) = dv[k] * stats.output.std[k];
    }
    auto g = bundle.posenet.backward(pose_cache, dy);
    add_into(r.posenet_grad, g.params);
    r.annotated_input_grad = std::move(g.input);
  }

  if (!terms.empty()) {
    const std::size_t S = spec.depth_subset.size();
    nn::Matrix dd(terms.size(), S);
    for (std::size_t i = 0; i < terms.size(); ++i)
      for (std::size_t k = 0; k < S; ++k) dd(i, k) = total.depth_grad[i][k] * stats.depth.std[k];
    auto gd = bundle.jdn.backward(depth_cache, dd);
    add_into(r.jdn_grad, gd.params);
    if (stop_gradient) {
      r.weak_input_grad = nn::Matrix(batch.weak_input.rows, batch.weak_input.cols);
    } else {
      auto gp = bundle.posenet.backward(weak_cache, gd.input);
      add_into(r.posenet_grad, gp.params);
      r.weak_input_grad = std::move(gp.input);
    }
    for (auto& t : terms) r.predicted_depth.push_back(std::move(t.predicted_mm));
    r.depth_grad = std::move(total.depth_grad);
  }
  return r;
}

nlohmann::json to_json(const EpochLog& l) {
  return {{"epoch", l.epoch}, {"lr", l.lr},       {"pose_loss", l.pose_loss}, {"weak_loss", l.weak_loss},
          {"total", l.total}, {"steps", l.steps}};
}

TrainResult train(const TrainConfig& config, const Dataset& data, const SkeletonSpec& spec,
                  const EpochCallback& on_epoch) {
  config.validate();
  spec.validate();
  if (data.annotated.empty()) throw ConfigError("training needs at least one annotated sample");

  TrainResult result{make_bundle(spec, fit_standardizer(data.annotated, spec, data.weak), config), {}};
  ModelBundle& bundle = result.bundle;
  nn::AdamState pose_adam, depth_adam;

  const bool has_weak = !data.weak.empty();
  const std::size_t ann_per = has_weak ? config.batch_size / 2 : config.batch_size;
  const std::size_t weak_per = has_weak ? config.batch_size / 2 : 0;
  const std::size_t N = data.annotated.size();
  const ZoomRange zoom = config.zoom();
  const RobustLossConfig loss = config.loss();

  Rng order = make_rng(config.seed, kStreamOrder);
  Rng weak_draw = make_rng(config.seed, kStreamWeakDraw);
  std::uniform_int_distribution<std::size_t> pick(0, has_weak ? data.weak.size() - 1 : 0);
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = nn::lr_schedule(config.learning_rate, epoch, config.lr_decay, config.lr_decay_every);
    std::shuffle(perm.begin(), perm.end(), order);
    log.steps = (N + ann_per - 1) / ann_per;

    double pose_sum = 0.0, weak_sum = 0.0, total_sum = 0.0;
    std::size_t weak_seen = 0;
    for (std::size_t step = 0; step < log.steps; ++step) {
      const std::uint64_t step_id = (static_cast<std::uint64_t>(epoch) << 32) | step;
      Rng zoom_ann = make_rng(derive_seed(config.seed, kStreamZoom), 2 * step_id);
      Rng zoom_weak = make_rng(derive_seed(config.seed, kStreamZoom), 2 * step_id + 1);

      std::vector<ViewSample> views;
      std::vector<const CameraIntrinsics*> cams;
      const std::size_t lo = step * ann_per, hi = std::min(N, lo + ann_per);
      for (std::size_t i = lo; i < hi; ++i) {
        const PersonSample& s = data.annotated[perm[i]];
        views.push_back(zoom_augment(s.view, s.camera, zoom, zoom_ann));
        cams.push_back(&s.camera);
      }
      // With lambda = 0 the weak half contributes exactly zero gradient;
      // the draws still happen so the sampling streams stay aligned.
      for (std::size_t i = 0; i < weak_per; ++i) {
        const PersonSample& s = data.weak[pick(weak_draw)];
        if (loss.lambda == 0.0) continue;
        views.push_back(zoom_augment(s.view, s.camera, zoom, zoom_weak));
        cams.push_back(&s.camera);
      }
      std::vector<View> a, w;
      for (std::size_t i = 0; i < views.size(); ++i) (i < hi - lo ? a : w).push_back({&views[i], cams[i]});
      const Batch batch = assemble(bundle, a, w);

      const BatchResult res = evaluate_batch(bundle, batch, loss, nn::Mode::Train,
                                             derive_seed(derive_seed(config.seed, kStreamDropout), step_id),
                                             config.stop_gradient);
      bundle.posenet.apply_adam(res.posenet_grad, pose_adam, log.lr);
      if (has_weak) bundle.jdn.apply_adam(res.jdn_grad, depth_adam, log.lr);

      pose_sum += res.pose_term;
      weak_sum += res.depth_term;
      total_sum += res.value;
      weak_seen += w.size();
    }
    log.pose_loss = pose_sum / static_cast<double>(N);
    log.weak_loss = weak_seen ? weak_sum / static_cast<double>(weak_seen) : 0.0;
    log.total = total_sum / static_cast<double>(log.steps);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, bundle);
  }
  return result;
}

DepthGradientProfile depth_gradient_profile(const ModelBundle& bundle, std::span<const PersonSample> weak,
                                            const RobustLossConfig& loss) {
  DepthGradientProfile out;
  double vis_sum = 0.0, occ_sum = 0.0;
  const auto& subset = bundle.skeleton.depth_subset;
  for (std::size_t start = 0; start < weak.size(); start += kPredictChunk) {
    const auto chunk = weak.subspan(start, std::min(kPredictChunk, weak.size() - start));
    const Batch batch = make_batch(bundle, {}, chunk);
    const BatchResult r = evaluate_batch(bundle, batch, loss, nn::Mode::Eval, 0, true);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (chunk[i].visible.size() != bundle.skeleton.joint_count()) continue;
      for (std::size_t k = 0; k < subset.size(); ++k) {
        if (!batch.weak_targets[i].valid(k)) continue;
        const double g = std::abs(r.depth_grad[i][k]);
        if (chunk[i].visible[subset[k]]) {
          vis_sum += g;
          ++out.visible_count;
        } else {
          occ_sum += g;
          ++out.occluded_count;
        }
      }
    }
  }
  if (out.visible_count) out.visible_mean = vis_sum / static_cast<double>(out.visible_count);
  if (out.occluded_count) out.occluded_mean = occ_sum / static_cast<double>(out.occluded_count);
  return out;
}

}  // namespace wdpose
