#include <doctest.h>

#include <cmath>
#include <random>

#include "wdpose/error.hpp"
#include "wdpose/skeleton.hpp"

using namespace wdpose;

namespace {

Pose3D random_pose(std::mt19937_64& rng, std::size_t J) {
  std::normal_distribution<double> n(0.0, 400.0);
  std::uniform_real_distribution<double> z(2000.0, 7000.0);
  const Point3D c{n(rng), n(rng), z(rng)};
  Pose3D p;
  for (std::size_t j = 0; j < J; ++j) p.push_back(c + Point3D{n(rng), n(rng), n(rng)});
  return p;
}

Point3D rotate_y(const Point3D& p, const Point3D& center, double a) {
  const Point3D d = p - center;
  return center + Point3D{std::cos(a) * d.x + std::sin(a) * d.z, d.y, -std::sin(a) * d.x + std::cos(a) * d.z};
}

}  // namespace

TEST_CASE("default skeleton is valid") {
  const SkeletonSpec s = SkeletonSpec::mupots17();
  CHECK_NOTHROW(s.validate());
  CHECK(s.joint_count() == 17);
  CHECK(s.names[s.root] == "pelvis");
  CHECK(s.names[s.neck] == "neck");
  CHECK(s.depth_subset.size() == 14);
  for (const char* n : {"left_wrist", "right_wrist", "left_elbow", "right_elbow", "left_shoulder", "right_shoulder",
                        "left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle"}) {
    const std::size_t j = s.index_of(n);
    CHECK(std::find(s.depth_subset.begin(), s.depth_subset.end(), j) != s.depth_subset.end());
  }
}

TEST_CASE("skeleton validation rejects malformed specs") {
  SkeletonSpec s = SkeletonSpec::mupots17();
  SUBCASE("repeated subset joint") {
    s.depth_subset[1] = s.depth_subset[0];
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("wrong subset size") {
    s.depth_subset.pop_back();
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("index out of range") {
    s.neck = 40;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("cycle") {
    s.parents[15] = 1;  // spine -> neck -> spine
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("unknown joint name") { CHECK_THROWS_AS(s.index_of("tail"), ConfigError); }
}

TEST_CASE("skeleton JSON round trip") {
  const SkeletonSpec s = SkeletonSpec::mupots17();
  const SkeletonSpec back = skeleton_from_json(to_json(s));
  CHECK(back.names == s.names);
  CHECK(back.parents == s.parents);
  CHECK(back.root == s.root);
  CHECK(back.neck == s.neck);
  CHECK(back.left_knee == s.left_knee);
  CHECK(back.right_knee == s.right_knee);
  CHECK(back.depth_subset == s.depth_subset);
  auto doc = to_json(s);
  doc["depth_subset"][0] = "nose";
  CHECK_THROWS_AS(skeleton_from_json(doc), ConfigError);
  doc.erase("names");
  CHECK_THROWS_AS(skeleton_from_json(doc), ConfigError);
}

TEST_CASE("decompose / compose") {
  const SkeletonSpec s = SkeletonSpec::mupots17();
  std::mt19937_64 rng(7);

  SUBCASE("collapsed pose has zero offsets") {
    const Pose3D p(17, Point3D{10.0, -20.0, 3000.0});
    const auto d = decompose(p, s);
    CHECK(d.root == p[s.root]);
    REQUIRE(d.relative.size() == 16);
    for (const auto& r : d.relative) CHECK(r == Point3D{});
  }
  SUBCASE("round trip is bit-exact on a dyadic grid") {
    // Coordinates on a 2^-10 mm grid below 2^20 mm make every difference
    // exactly representable.
    for (int t = 0; t < 200; ++t) {
      Pose3D p = random_pose(rng, 17);
      for (auto& j : p) j = {std::ldexp(std::round(std::ldexp(j.x, 10)), -10),
                             std::ldexp(std::round(std::ldexp(j.y, 10)), -10),
                             std::ldexp(std::round(std::ldexp(j.z, 10)), -10)};
      CHECK(compose(decompose(p, s), s) == p);
    }
  }
  SUBCASE("round trip within an ulp for arbitrary doubles") {
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const Pose3D p = random_pose(rng, 17);
      const Pose3D q = compose(decompose(p, s), s);
      for (std::size_t j = 0; j < 17; ++j) worst = std::max(worst, distance(p[j], q[j]) / norm(p[j]));
    }
    CHECK(worst < 1e-15);
  }
  SUBCASE("translation moves only the root") {
    const Pose3D p = random_pose(rng, 17);
    Pose3D q = p;
    const Point3D t{128.0, -64.0, 512.0};  // powers of two keep the sums exact
    for (auto& j : q) j = j + t;
    const auto dp = decompose(p, s), dq = decompose(q, s);
    CHECK(dq.root == dp.root + t);
    for (std::size_t k = 0; k < dp.relative.size(); ++k)
      CHECK(distance(dq.relative[k], dp.relative[k]) < 1e-9);
  }
}

TEST_CASE("height_normalize") {
  const SkeletonSpec s = SkeletonSpec::mupots17();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> target(500.0, 1500.0), angle(-3.0, 3.0);

  SUBCASE("hits the target length with the hip fixed") {
    for (int t = 0; t < 500; ++t) {
      const Pose3D p = random_pose(rng, 17);
      const double L = target(rng);
      const Pose3D q = height_normalize(p, s, L);
      CHECK(std::abs(knee_to_neck_length(q, s) - L) <= 1e-9 * L);
      CHECK(q[s.root] == p[s.root]);
    }
  }
  SUBCASE("knee-to-neck length uses the knee midpoint") {
    Pose3D p(17, Point3D{0.0, 0.0, 3000.0});
    p[s.neck] = {0.0, -500.0, 3000.0};
    p[s.left_knee] = {-100.0, 400.0, 3000.0};
    p[s.right_knee] = {100.0, 400.0, 3000.0};
    CHECK(knee_to_neck_length(p, s) == 900.0);
  }
  SUBCASE("fixed point and idempotence") {
    const Pose3D p = random_pose(rng, 17);
    const Pose3D q = height_normalize(p, s);
    const Pose3D r = height_normalize(q, s);
    for (std::size_t j = 0; j < 17; ++j) CHECK(distance(q[j], r[j]) < 1e-9);
  }
  SUBCASE("commutes with rotation about the hip") {
    for (int t = 0; t < 50; ++t) {
      const Pose3D p = random_pose(rng, 17);
      const double a = angle(rng);
      Pose3D rp = p;
      for (auto& j : rp) j = rotate_y(j, p[s.root], a);
      const Pose3D n_then_r = [&] {
        Pose3D q = height_normalize(p, s);
        for (auto& j : q) j = rotate_y(j, p[s.root], a);
        return q;
      }();
      const Pose3D r_then_n = height_normalize(rp, s);
      for (std::size_t j = 0; j < 17; ++j) CHECK(distance(n_then_r[j], r_then_n[j]) < 1e-8);
    }
  }
  SUBCASE("degenerate pose") {
    const Pose3D p(17, Point3D{0.0, 0.0, 3000.0});
    CHECK_THROWS_AS(height_normalize(p, s), DegeneratePoseError);
  }
}
