#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "wdpose/error.hpp"
#include "wdpose/pipeline.hpp"
#include "wdpose/synth.hpp"

using namespace wdpose;

namespace {

const SkeletonSpec kSpec = SkeletonSpec::mupots17();

synth::SceneConfig small_scenes() {
  synth::SceneConfig c;
  c.width = 160;
  c.height = 120;
  c.focal = {85.0, 105.0};
  return c;
}

const Dataset& fixture() {
  static const Dataset d = synth::generate_dataset(21, small_scenes(), kSpec, {120, 120, 60}).data;
  return d;
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 16;
  c.hidden_width = 32;
  c.depth_hidden_width = 24;
  c.residual_blocks = 1;
  c.dropout = 0.2;
  c.seed = 5;
  return c;
}

bool same_params(const nn::Mlp& a, const nn::Mlp& b) {
  const auto pa = a.params(), pb = b.params();
  return pa.size() == pb.size() && std::equal(pa.begin(), pa.end(), pb.begin());
}

}  // namespace

TEST_CASE("standardizer") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3.0, 7.0);
  std::vector<std::vector<double>> rows(50, std::vector<double>(4));
  for (auto& r : rows)
    for (auto& v : r) v = n(rng);
  rows[3][2] = std::nan("");
  const Standardizer s = Standardizer::fit(rows);
  for (std::size_t k = 0; k < 4; ++k) {
    double sum = 0.0, sq = 0.0, cnt = 0.0;
    for (const auto& r : rows) {
      if (std::isnan(r[k])) continue;
      const double z = (r[k] - s.mean[k]) / s.std[k];
      sum += z;
      sq += z * z;
      cnt += 1.0;
    }
    CHECK(std::abs(sum / cnt) < 1e-9);
    CHECK(std::abs(std::sqrt(sq / cnt) - 1.0) < 1e-9);
  }

  SUBCASE("constant column") {
    for (auto& r : rows) r[1] = 4.0;
    CHECK_THROWS_AS(Standardizer::fit(rows), ConfigError);
  }
  SUBCASE("too few samples") {
    CHECK_THROWS_AS(fit_standardizer(std::span(fixture().annotated).first(1), kSpec), ConfigError);
  }
  SUBCASE("sample order does not matter") {
    const auto& ann = fixture().annotated;
    std::vector<PersonSample> rev(ann.rbegin(), ann.rend());
    const StandardizerStats a = fit_standardizer(ann, kSpec), b = fit_standardizer(rev, kSpec);
    for (std::size_t k = 0; k < a.input.size(); ++k) {
      CHECK(a.input.mean[k] == doctest::Approx(b.input.mean[k]).epsilon(1e-12));
      CHECK(a.input.std[k] == doctest::Approx(b.input.std[k]).epsilon(1e-12));
    }
    for (std::size_t k = 0; k < a.output.size(); ++k)
      CHECK(a.output.mean[k] == doctest::Approx(b.output.mean[k]).epsilon(1e-12));
  }
  SUBCASE("standardized annotated data") {
    const auto& ann = fixture().annotated;
    const StandardizerStats st = fit_standardizer(ann, kSpec);
    std::vector<double> sum(3 * 17, 0.0), sq(3 * 17, 0.0);
    for (const auto& smp : ann) {
      const auto raw = raw_target(smp.view.joints_3d, kSpec);
      for (std::size_t k = 0; k < raw.size(); ++k) {
        const double z = (raw[k] - st.output.mean[k]) / st.output.std[k];
        sum[k] += z;
        sq[k] += z * z;
      }
    }
    const double n = static_cast<double>(ann.size());
    for (std::size_t k = 0; k < sum.size(); ++k) {
      CHECK(std::abs(sum[k] / n) < 1e-9);
      CHECK(std::abs(sq[k] / n - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("build_input") {
  const auto& ann = fixture().annotated;
  const StandardizerStats st = fit_standardizer(ann, kSpec);
  const PersonSample& s = ann.front();

  SUBCASE("inputs at the mean standardize to zero") {
    ViewSample v = s.view;
    std::vector<Point2D> mean_2d;
    for (std::size_t j = 0; j < 17; ++j) {
      mean_2d.push_back({st.input.mean[2 * j], st.input.mean[2 * j + 1]});
      v.depth_features.mm[j] = st.input.mean[34 + j];
    }
    v.joints_2d = denormalize_2d(mean_2d, s.camera);
    for (double x : build_input(v, s.camera, st, kSpec)) CHECK(std::abs(x) < 1e-9);
  }
  SUBCASE("invalid depth feature maps to exactly zero") {
    ViewSample v = s.view;
    v.depth_features.mm[5] = std::nan("");
    const auto x = build_input(v, s.camera, st, kSpec);
    CHECK(x[34 + 5] == 0.0);
    CHECK(!std::signbit(x[34 + 5]));
  }
  SUBCASE("two cameras see the same normalized coordinates") {
    const CameraIntrinsics a{150.0, 150.0, 80.0, 60.0}, b{300.0, 280.0, 170.0, 110.0};
    ViewSample va = s.view, vb = s.view;
    va.joints_2d = project(s.view.joints_3d, a);
    vb.joints_2d = project(s.view.joints_3d, b);
    const auto xa = build_input(va, a, st, kSpec), xb = build_input(vb, b, st, kSpec);
    for (std::size_t k = 0; k < xa.size(); ++k) CHECK(xa[k] == doctest::Approx(xb[k]).epsilon(1e-9));
  }
  SUBCASE("depth map overload") {
    std::vector<float> px(160 * 120);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = 2000.0f + static_cast<float>(i % 160);
    const DepthMap m(160, 120, std::move(px));
    ViewSample v = s.view;
    v.depth_features = read_depth_at(m, v.joints_2d);
    CHECK(build_input(v.joints_2d, s.camera, m, st, kSpec) == build_input(v, s.camera, st, kSpec));
  }
  SUBCASE("errors") {
    ViewSample v = s.view;
    v.depth_features = {};
    CHECK_THROWS_AS(build_input(v, s.camera, st, kSpec), InvalidInputError);
    v = s.view;
    v.joints_2d.pop_back();
    CHECK_THROWS_AS(build_input(v, s.camera, st, kSpec), ShapeError);
  }
}

TEST_CASE("decode_output is translation consistent") {
  const StandardizerStats st = fit_standardizer(fixture().annotated, kSpec);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> y(51);
  for (auto& v : y) v = n(rng);
  const Pose3D base = decode_output(y, st, kSpec);
  const Point3D delta{120.0, -45.0, 800.0};
  y[0] += delta.x / st.output.std[0];
  y[1] += delta.y / st.output.std[1];
  y[2] += delta.z / st.output.std[2];
  const Pose3D moved = decode_output(y, st, kSpec);
  for (std::size_t j = 0; j < 17; ++j) CHECK(distance(moved[j], base[j] + delta) < 1e-9);
}

TEST_CASE("gradient routing") {
  const auto& d = fixture();
  TrainConfig cfg = small_config();
  const ModelBundle b = make_bundle(kSpec, fit_standardizer(d.annotated, kSpec, d.weak), cfg);
  const auto nonzero = [](const std::vector<double>& g) {
    return std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; });
  };

  const Batch annotated_only = make_batch(b, std::span(d.annotated).first(8), {});
  const BatchResult ra = evaluate_batch(b, annotated_only, cfg.loss(), nn::Mode::Train, 1);
  CHECK(nonzero(ra.posenet_grad));
  CHECK(!nonzero(ra.jdn_grad));

  const Batch weak_only = make_batch(b, {}, std::span(d.weak).first(8));
  const BatchResult rw = evaluate_batch(b, weak_only, cfg.loss(), nn::Mode::Train, 1);
  CHECK(nonzero(rw.posenet_grad));
  CHECK(nonzero(rw.jdn_grad));
  CHECK(rw.pose_term == 0.0);

  const BatchResult rs = evaluate_batch(b, weak_only, cfg.loss(), nn::Mode::Train, 1, true);
  CHECK(!nonzero(rs.posenet_grad));
  CHECK(rs.jdn_grad == rw.jdn_grad);

  // The objective is additive over the two halves of a mixed batch.
  const Batch mixed = make_batch(b, std::span(d.annotated).first(8), std::span(d.weak).first(8));
  const BatchResult rm = evaluate_batch(b, mixed, cfg.loss(), nn::Mode::Eval, 0);
  const BatchResult ea = evaluate_batch(b, annotated_only, cfg.loss(), nn::Mode::Eval, 0);
  const BatchResult ew = evaluate_batch(b, weak_only, cfg.loss(), nn::Mode::Eval, 0);
  CHECK(rm.value == doctest::Approx(ea.value + ew.value).epsilon(1e-12));
  for (std::size_t k = 0; k < rm.jdn_grad.size(); ++k)
    CHECK(rm.jdn_grad[k] == doctest::Approx(ew.jdn_grad[k]).epsilon(1e-12));
}

TEST_CASE("training") {
  const auto& d = fixture();

  SUBCASE("logged lr follows the schedule") {
    TrainConfig cfg = small_config();
    cfg.epochs = 9;
    cfg.lr_decay_every = 2;
    cfg.lr_decay = 0.5;
    const auto r = train(cfg, d, kSpec);
    REQUIRE(r.log.size() == 9);
    for (const auto& e : r.log) {
      CHECK(e.lr == nn::lr_schedule(cfg.learning_rate, e.epoch, 0.5, 2));
      CHECK(std::isfinite(e.total));
    }
    CHECK(r.log[8].lr == 0.001 / 16.0);
  }

  SUBCASE("lambda = 0 matches training without weak data") {
    TrainConfig with_weak = small_config();
    with_weak.lambda = 0.0;
    with_weak.batch_size = 16;
    TrainConfig without = with_weak;
    without.batch_size = 8;
    Dataset no_weak = d;
    no_weak.weak.clear();

    std::vector<std::vector<double>> traj_a, traj_b;
    const auto a = train(with_weak, d, kSpec, [&](const EpochLog&, const ModelBundle& m) {
      traj_a.emplace_back(m.posenet.params().begin(), m.posenet.params().end());
    });
    const auto b = train(without, no_weak, kSpec, [&](const EpochLog&, const ModelBundle& m) {
      traj_b.emplace_back(m.posenet.params().begin(), m.posenet.params().end());
    });
    REQUIRE(traj_a.size() == traj_b.size());
    for (std::size_t e = 0; e < traj_a.size(); ++e) CHECK(traj_a[e] == traj_b[e]);
    for (std::size_t e = 0; e < a.log.size(); ++e) CHECK(a.log[e].pose_loss == b.log[e].pose_loss);
    CHECK(a.log.back().weak_loss == 0.0);
  }

  SUBCASE("overfits ten samples") {
    Dataset tiny;
    tiny.annotated.assign(d.annotated.begin(), d.annotated.begin() + 10);
    // Full-batch steps without dropout or zoom: the objective is the same
    // function every epoch.
    TrainConfig cfg = small_config();
    cfg.epochs = 20;
    cfg.batch_size = 10;
    cfg.hidden_width = 64;
    cfg.dropout = 0.0;
    cfg.zoom_max = 1.0;
    const auto r = train(cfg, tiny, kSpec);
    int upticks = 0;
    for (std::size_t e = 1; e < r.log.size(); ++e) upticks += r.log[e].pose_loss > r.log[e - 1].pose_loss;
    CHECK(upticks <= 2);
    CHECK(r.log.back().pose_loss < 0.5 * r.log.front().pose_loss);
  }

  SUBCASE("bit-reproducible, also across thread counts") {
    const TrainConfig cfg = small_config();
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto a = train(cfg, d, kSpec);
    omp_set_num_threads(3);
    const auto b = train(cfg, d, kSpec);
    omp_set_num_threads(saved);
    CHECK(a.log == b.log);
    CHECK(same_params(a.bundle.posenet, b.bundle.posenet));
    CHECK(same_params(a.bundle.jdn, b.bundle.jdn));
    CHECK(to_json(a.bundle).dump() == to_json(b.bundle).dump());

    TrainConfig other = cfg;
    other.seed = 6;
    CHECK(!same_params(train(other, d, kSpec).bundle.posenet, a.bundle.posenet));
  }

  SUBCASE("errors") {
    Dataset empty = d;
    empty.annotated.clear();
    CHECK_THROWS_AS(train(small_config(), empty, kSpec), ConfigError);
    TrainConfig odd = small_config();
    odd.batch_size = 7;
    CHECK_THROWS_AS(train(odd, d, kSpec), ConfigError);
  }
}

TEST_CASE("prediction") {
  const auto& d = fixture();
  const ModelBundle model = train(small_config(), d, kSpec).bundle;

  CHECK(predict(model, d.test) == predict(model, d.test));
  CHECK(predict(model, {}).empty());
  CHECK(predict_frames(model, {}).empty());
  const auto frames = predict_frames(model, d.test);
  std::size_t n = 0;
  for (const auto& f : frames) n += f.poses.size();
  CHECK(n == d.test.size());

  SUBCASE("bundle round trip") {
    const ModelBundle back = bundle_from_json(to_json(model));
    CHECK(predict(back, d.test) == predict(model, d.test));
    auto doc = to_json(model);
    doc.erase("version");
    CHECK_THROWS_AS(bundle_from_json(doc), FormatError);
    doc = to_json(model);
    doc["version"] = 99;
    CHECK_THROWS_AS(bundle_from_json(doc), FormatError);
    doc = to_json(model);
    doc["stats"]["depth"]["mean"] = std::vector<double>(3, 0.0);
    doc["stats"]["depth"]["std"] = std::vector<double>(3, 1.0);
    CHECK_THROWS_AS(bundle_from_json(doc), FormatError);
  }
}

TEST_CASE("training reduces absolute error fivefold") {
  // Each held-out prediction is scored against its own person. Root
  // matching would drop most untrained predictions and hide the gap.
  const Dataset train_set = synth::generate_dataset(21, {}, kSpec, {1000, 0, 0}).data;
  const auto held_out = synth::generate_dataset(22, {}, kSpec, {200, 0, 0}).data.annotated;
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.hidden_width = 256;
  cfg.depth_hidden_width = 24;
  cfg.residual_blocks = 1;
  cfg.dropout = 0.1;
  cfg.seed = 5;
  const auto error = [&](const ModelBundle& m) {
    const auto pred = predict(m, held_out);
    double sum = 0.0;
    for (std::size_t i = 0; i < held_out.size(); ++i)
      for (std::size_t j = 0; j < 17; ++j) sum += distance(pred[i][j], held_out[i].view.joints_3d[j]);
    return sum / static_cast<double>(17 * held_out.size());
  };
  const double before = error(make_bundle(kSpec, fit_standardizer(train_set.annotated, kSpec), cfg));
  const double after = error(train(cfg, train_set, kSpec).bundle);
  MESSAGE("absolute MPJPE untrained " << before << " mm, trained " << after << " mm");
  CHECK(after * 5.0 <= before);
}

TEST_CASE("train config JSON") {
  TrainConfig c = small_config();
  c.lambda = 0.25;
  c.stop_gradient = true;
  c.data_dir = "somewhere";
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(train_config_from_json(nlohmann::json::object()).epochs == 100);
  CHECK_THROWS_AS(train_config_from_json({{"epochz", 3}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"epochs", "many"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"batch_size", 3}}), ConfigError);
}
