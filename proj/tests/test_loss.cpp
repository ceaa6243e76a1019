#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "wdpose/error.hpp"
#include "wdpose/gradcheck.hpp"
#include "wdpose/loss.hpp"

using namespace wdpose;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Pose3D> random_poses(std::mt19937_64& rng, std::size_t n, std::size_t J, double sigma) {
  std::normal_distribution<double> d(0.0, sigma);
  std::vector<Pose3D> out(n, Pose3D(J));
  for (auto& p : out)
    for (auto& q : p) q = {d(rng), d(rng), 4000.0 + d(rng)};
  return out;
}

}  // namespace

TEST_CASE("Geman-McClure values") {
  CHECK(gm_loss(0.0, 100.0) == 0.0);
  CHECK(gm_loss(1.0, 1.0) == 0.5);
  CHECK(gm_loss(1000.0, 1.0) == doctest::Approx(0.999999).epsilon(1e-12));
  CHECK(gm_grad(0.0, 7.0) == 0.0);
  CHECK(gm_grad(1.0, 1.0) == 0.5);
  CHECK(gm_grad(1000.0, 1.0) == doctest::Approx(2e-9).epsilon(1e-5));
  for (double alpha : {1.0, 100.0, 2500.0, 1e4}) CHECK(gm_loss(std::sqrt(alpha), alpha) == 0.5);
}

TEST_CASE("Geman-McClure shape") {
  for (double alpha : {0.25, 1.0, 100.0, 2500.0}) {
    CAPTURE(alpha);
    const double s = std::sqrt(alpha);
    double prev_loss = -1.0, best = 0.0, best_x = 0.0;
    std::vector<double> xs;
    for (double e = -3.0; e <= 3.0; e += 1e-3) xs.push_back(s * std::pow(10.0, e));
    for (double x : xs) {
      const double v = gm_loss(x, alpha);
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
      CHECK(v == gm_loss(-x, alpha));
      CHECK(v > prev_loss);
      prev_loss = v;
      const double g = std::abs(gm_grad(x, alpha));
      if (g > best) best = g, best_x = x;
      if (x >= 10.0 * s) CHECK(g < 0.02 / s);
    }
    const double peak = std::sqrt(alpha / 3.0);
    CHECK(std::abs(best_x - peak) <= peak * (std::pow(10.0, 1e-3) - 1.0));
    double prev = std::numeric_limits<double>::infinity();
    for (double x : xs)
      if (x > peak) {
        const double g = std::abs(gm_grad(x, alpha));
        CHECK(g < prev);
        prev = g;
      }
    CHECK(gm_grad(-3.0 * s, alpha) == -gm_grad(3.0 * s, alpha));
  }
}

TEST_CASE("RobustLossConfig validation") {
  CHECK_THROWS_AS((RobustLossConfig{0.0, 1.0}).validate(), ConfigError);
  CHECK_THROWS_AS((RobustLossConfig{-1.0, 1.0}).validate(), ConfigError);
  CHECK_THROWS_AS((RobustLossConfig{100.0, -0.5}).validate(), ConfigError);
  CHECK_NOTHROW((RobustLossConfig{100.0, 0.0}).validate());
}

TEST_CASE("L1 pose loss") {
  const std::size_t J = 17;
  std::mt19937_64 rng(3);
  const auto gt = random_poses(rng, 2, J, 300.0);

  CHECK(l1_pose_loss(gt, gt).value == 0.0);

  auto pred = gt;
  pred[0][4].x += 3.0;
  const PoseLoss l = l1_pose_loss(pred, gt);
  CHECK(l.value == doctest::Approx(3.0 / (3.0 * J)).epsilon(1e-12));

  const auto noisy = random_poses(rng, 2, J, 300.0);
  const PoseLoss n = l1_pose_loss(noisy, gt);
  const double inv = 1.0 / (3.0 * J);
  for (const auto& p : n.grad)
    for (const auto& q : p)
      for (double v : {q.x, q.y, q.z}) CHECK((v == inv || v == -inv || v == 0.0));
  // Exact zeros get a zero subgradient.
  for (const auto& q : l.grad[1]) CHECK(q == Point3D{});

  CHECK_THROWS_AS(l1_pose_loss(std::vector<Pose3D>(1, Pose3D(J)), gt), ShapeError);
  CHECK_THROWS_AS(l1_pose_loss(std::vector<Pose3D>(2, Pose3D(J - 1)), gt), ShapeError);
}

TEST_CASE("total loss") {
  const std::size_t J = 17;
  std::mt19937_64 rng(4);
  const auto gt = random_poses(rng, 3, J, 300.0);
  const auto pred = random_poses(rng, 3, J, 300.0);
  std::normal_distribution<double> res(0.0, 40.0);
  std::vector<WeakDepthTerm> weak(3);
  for (auto& w : weak) {
    for (int k = 0; k < 14; ++k) {
      w.predicted_mm.push_back(3000.0 + 100.0 * k);
      w.target.mm.push_back(w.predicted_mm.back() + res(rng));
    }
  }
  weak[1].target.mm[6] = kNaN;
  const double l1 = l1_pose_loss(pred, gt).value;

  SUBCASE("lambda = 0 and an empty weak batch reduce to L1") {
    CHECK(total_loss(pred, gt, weak, {100.0, 0.0}).value == l1);
    CHECK(total_loss(pred, gt, {}, {100.0, 1.0}).value == l1);
  }
  SUBCASE("value decomposition") {
    const RobustLossConfig cfg{100.0, 0.7};
    const TotalLoss t = total_loss(pred, gt, weak, cfg);
    double rho = 0.0;
    for (const auto& w : weak)
      for (std::size_t k = 0; k < 14; ++k)
        if (!std::isnan(w.target.mm[k])) rho += gm_loss(w.predicted_mm[k] - w.target.mm[k], cfg.alpha);
    CHECK(t.pose_term == doctest::Approx(l1).epsilon(1e-14));
    CHECK(t.depth_term == doctest::Approx(0.7 * rho).epsilon(1e-14));
    CHECK(t.value == doctest::Approx(l1 + 0.7 * rho).epsilon(1e-14));
  }
  SUBCASE("invalid readouts contribute nothing") {
    const RobustLossConfig cfg{100.0, 1.0};
    const TotalLoss t = total_loss(pred, gt, weak, cfg);
    CHECK(t.depth_grad[1][6] == 0.0);
    auto moved = weak;
    moved[1].predicted_mm[6] += 500.0;
    CHECK(total_loss(pred, gt, moved, cfg).value == t.value);
  }
  SUBCASE("additive over samples") {
    const RobustLossConfig cfg{100.0, 1.3};
    const double all = total_loss(pred, gt, weak, cfg).value;
    const double parts = total_loss(std::span(pred).first(1), std::span(gt).first(1), std::span(weak).first(2), cfg).value +
                         total_loss(std::span(pred).subspan(1), std::span(gt).subspan(1), std::span(weak).subspan(2), cfg).value;
    CHECK(all == doctest::Approx(parts).epsilon(1e-13));
  }
  SUBCASE("gradient matches finite differences") {
    // Pose errors clear of the L1 kinks, depth residuals around sqrt(alpha).
    std::uniform_real_distribution<double> mag(1.0, 30.0);
    auto sign = [&] { return rng() & 1 ? 1.0 : -1.0; };
    auto near = gt;
    for (auto& p : near)
      for (auto& q : p) q = q + Point3D{sign() * mag(rng), sign() * mag(rng), sign() * mag(rng)};
    auto w0 = weak;
    for (auto& w : w0)
      for (std::size_t k = 0; k < 14; ++k)
        if (!std::isnan(w.target.mm[k])) w.target.mm[k] = w.predicted_mm[k] + sign() * mag(rng);
    const RobustLossConfig cfg{100.0, 0.9};
    const TotalLoss t = total_loss(near, gt, w0, cfg);
    std::vector<double> theta, analytic;
    for (std::size_t p = 0; p < near.size(); ++p)
      for (std::size_t j = 0; j < J; ++j) {
        theta.insert(theta.end(), {near[p][j].x, near[p][j].y, near[p][j].z});
        analytic.insert(analytic.end(), {t.pose_grad[p][j].x, t.pose_grad[p][j].y, t.pose_grad[p][j].z});
      }
    for (std::size_t w = 0; w < w0.size(); ++w)
      for (std::size_t k = 0; k < 14; ++k) {
        theta.push_back(w0[w].predicted_mm[k]);
        analytic.push_back(t.depth_grad[w][k]);
      }
    auto loss = [&] {
      auto p2 = near;
      auto w2 = w0;
      std::size_t i = 0;
      for (auto& p : p2)
        for (auto& q : p) q = {theta[i], theta[i + 1], theta[i + 2]}, i += 3;
      for (auto& w : w2)
        for (double& d : w.predicted_mm) d = theta[i++];
      return gradcheck::Probe{total_loss(p2, gt, w2, cfg).value, 0};
    };
    CHECK(gradcheck::compare(theta, analytic, loss, 1e-5).max_rel_error < 1e-6);
  }
  SUBCASE("predicted/target length mismatch") {
    auto bad = weak;
    bad[0].predicted_mm.pop_back();
    CHECK_THROWS_AS(total_loss(pred, gt, bad, {100.0, 1.0}), ShapeError);
  }
}
