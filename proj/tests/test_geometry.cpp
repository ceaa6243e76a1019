#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "wdpose/augment.hpp"
#include "wdpose/error.hpp"
#include "wdpose/geometry.hpp"

using namespace wdpose;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST_CASE("normalize_2d maps the principal point to the origin") {
  const CameraIntrinsics cam{800.0, 820.0, 313.5, 241.25};
  const Point2D pp{cam.cx, cam.cy};
  const auto n = normalize_2d(std::span(&pp, 1), cam);
  CHECK(n[0] == Point2D{0.0, 0.0});
}

TEST_CASE("normalize_2d: one focal length off axis") {
  const CameraIntrinsics cam{1000.0, 1000.0, 500.0, 500.0};
  const Point2D p{1500.0, 500.0};
  const auto n = normalize_2d(std::span(&p, 1), cam);
  CHECK(n[0].x == 1.0);
  CHECK(n[0].y == 0.0);
}

TEST_CASE("normalize / denormalize round trip") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> f(50.0, 3000.0), c(-500.0, 1500.0), px(-1e4, 1e4);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const CameraIntrinsics cam{f(rng), f(rng), c(rng), c(rng)};
    const Point2D p{px(rng), px(rng)};
    const auto back = denormalize_2d(normalize_2d(std::span(&p, 1), cam), cam);
    worst = std::max({worst, rel(back[0].x, p.x), rel(back[0].y, p.y)});
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("normalize_2d rejects non-finite input") {
  const CameraIntrinsics cam{500.0, 500.0, 0.0, 0.0};
  const Point2D p{std::numeric_limits<double>::quiet_NaN(), 1.0};
  CHECK_THROWS_AS(normalize_2d(std::span(&p, 1), cam), InvalidInputError);
}

TEST_CASE("camera validation") {
  CHECK_THROWS_AS((CameraIntrinsics{0.0, 1.0, 0.0, 0.0}).validate(), InvalidParameterError);
  CHECK_THROWS_AS((CameraIntrinsics{1.0, -1.0, 0.0, 0.0}).validate(), InvalidParameterError);
  CHECK_THROWS_AS((CameraIntrinsics{1.0, 1.0, std::numeric_limits<double>::infinity(), 0.0}).validate(),
                  InvalidParameterError);
  CHECK_NOTHROW((CameraIntrinsics{1.0, 1.0, 0.0, 0.0}).validate());
}

TEST_CASE("project: pinhole examples") {
  const CameraIntrinsics cam{1000.0, 1000.0, 320.0, 240.0};
  CHECK(project(Point3D{0, 0, 1000}, cam) == Point2D{320.0, 240.0});
  CHECK(project(Point3D{100, 0, 1000}, cam) == Point2D{420.0, 240.0});
  CHECK_THROWS_AS(project(Point3D{0, 0, 0}, cam), BehindCameraError);
  CHECK_THROWS_AS(project(Point3D{0, 0, -5}, cam), BehindCameraError);
}

TEST_CASE("normalize_2d o project gives x/z, y/z; backproject inverts project") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> xy(-2000.0, 2000.0), z(100.0, 9000.0);
  const CameraIntrinsics cam{612.0, 598.0, 330.0, 250.0};
  for (int t = 0; t < 200; ++t) {
    const Point3D p{xy(rng), xy(rng), z(rng)};
    const Point2D px = project(p, cam);
    const auto n = normalize_2d(std::span(&px, 1), cam);
    CHECK(n[0].x == doctest::Approx(p.x / p.z).epsilon(1e-12));
    CHECK(n[0].y == doctest::Approx(p.y / p.z).epsilon(1e-12));
    const Point3D b = backproject(px, p.z, cam);
    CHECK(distance(b, p) < 1e-9 * norm(p));
  }
}

TEST_CASE("zoom_augment") {
  const CameraIntrinsics cam{600.0, 610.0, 320.0, 240.0};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> xy(-800.0, 800.0), z(1500.0, 7000.0);
  ViewSample s;
  for (int j = 0; j < 17; ++j) {
    const Point3D p{xy(rng), xy(rng), z(rng)};
    s.joints_3d.push_back(p);
    s.joints_2d.push_back(project(p, cam));
    s.depth_features.mm.push_back(p.z + 20.0);
    s.depth_targets.mm.push_back(j == 3 ? std::numeric_limits<double>::quiet_NaN() : p.z - 40.0);
  }

  SUBCASE("factor 1 is the identity") {
    const ViewSample z1 = zoom_augment(s, cam, 1.0);
    CHECK(z1.joints_2d == s.joints_2d);
    CHECK(z1.joints_3d == s.joints_3d);
    CHECK(z1.depth_features.mm == s.depth_features.mm);
  }
  SUBCASE("reprojection consistency at factor 2") {
    const ViewSample z2 = zoom_augment(s, cam, 2.0);
    double worst = 0.0;
    for (std::size_t j = 0; j < s.joints_3d.size(); ++j) {
      const Point2D p = project(z2.joints_3d[j], cam);
      worst = std::max({worst, std::abs(p.x - z2.joints_2d[j].x), std::abs(p.y - z2.joints_2d[j].y)});
      if (j != 3) CHECK(z2.depth_targets.mm[j] == doctest::Approx(s.depth_targets.mm[j] / 2.0).epsilon(1e-15));
    }
    CHECK(worst < 1e-6);
    CHECK(std::isnan(z2.depth_targets.mm[3]));
  }
  SUBCASE("principal point is a fixed point") {
    ViewSample c = s;
    c.joints_2d[0] = {cam.cx, cam.cy};
    const ViewSample z2 = zoom_augment(c, cam, 2.0);
    CHECK(z2.joints_2d[0] == Point2D{cam.cx, cam.cy});
  }
  SUBCASE("commutes with projection for random factors") {
    std::uniform_real_distribution<double> f(0.3, 3.0);
    for (int t = 0; t < 50; ++t) {
      const double k = f(rng);
      const ViewSample zk = zoom_augment(s, cam, k);
      for (std::size_t j = 0; j < s.joints_3d.size(); ++j) {
        const Point2D p = project(zk.joints_3d[j], cam);
        CHECK(std::abs(p.x - zk.joints_2d[j].x) < 1e-6);
        CHECK(std::abs(p.y - zk.joints_2d[j].y) < 1e-6);
      }
    }
  }
  SUBCASE("invalid factors") {
    CHECK_THROWS_AS(zoom_augment(s, cam, 0.0), InvalidParameterError);
    CHECK_THROWS_AS(zoom_augment(s, cam, -1.0), InvalidParameterError);
  }
  SUBCASE("random factor stays inside the range") {
    const ZoomRange range{1.0, 1.5};
    Rng r(9);
    for (int t = 0; t < 200; ++t) {
      const double k = range.draw(r);
      CHECK(k >= 1.0);
      CHECK(k <= 1.5);
    }
    CHECK_THROWS((ZoomRange{1.5, 1.0}).validate());
  }
}
