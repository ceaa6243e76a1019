#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "wdpose/depth.hpp"
#include "wdpose/error.hpp"

using namespace wdpose;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "wdpose_tests";
  fs::create_directories(dir);
  return dir / name;
}

DepthMap ramp(std::size_t w, std::size_t h, double a, double b, double c) {
  DepthMap m(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) m.at(x, y) = static_cast<float>(a + b * x + c * y);
  return m;
}

}  // namespace

TEST_CASE("bilinear readout") {
  SUBCASE("integer pixel returns the node value") {
    const DepthMap m = ramp(8, 6, 1000.0, 7.0, 13.0);
    CHECK(sample_bilinear(m, {3.0, 4.0}) == m.at(3, 4));
    CHECK(sample_bilinear(m, {0.0, 0.0}) == m.at(0, 0));
    CHECK(sample_bilinear(m, {7.0, 5.0}) == m.at(7, 5));
  }
  SUBCASE("center of a 2x2 block") {
    DepthMap m(2, 2, {1000.0f, 1000.0f, 2000.0f, 2000.0f});
    CHECK(sample_bilinear(m, {0.5, 0.5}) == 1500.0);
  }
  SUBCASE("affine fields are reproduced exactly") {
    // Values kept exactly representable in float32.
    const DepthMap m = ramp(64, 48, 2000.0, 3.0, 5.0);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ux(0.0, 63.0), uy(0.0, 47.0);
    for (int t = 0; t < 100; ++t) {
      const Point2D p{ux(rng), uy(rng)};
      const double want = 2000.0 + 3.0 * p.x + 5.0 * p.y;
      CHECK(std::abs(sample_bilinear(m, p) - want) <= 1e-6 * want);
    }
  }
  SUBCASE("out of range and holes are invalid") {
    DepthMap m = ramp(4, 4, 1000.0, 1.0, 1.0);
    CHECK(std::isnan(sample_bilinear(m, {-0.01, 1.0})));
    CHECK(std::isnan(sample_bilinear(m, {3.01, 1.0})));
    CHECK(std::isnan(sample_bilinear(m, {1.0, 3.5})));
    m.at(2, 2) = std::numeric_limits<float>::quiet_NaN();
    CHECK(std::isnan(sample_bilinear(m, {1.5, 1.5})));
    CHECK(std::isnan(sample_bilinear(m, {2.0, 2.0})));
    // A NaN neighbor with zero weight does not matter.
    CHECK(sample_bilinear(m, {1.0, 1.5}) == doctest::Approx(1002.5));
  }
  SUBCASE("readout stays within its four neighbors") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> v(500.0f, 9000.0f);
    std::vector<float> vals(16 * 12);
    for (auto& x : vals) x = v(rng);
    const DepthMap m(16, 12, vals);
    std::uniform_real_distribution<double> ux(0.0, 15.0), uy(0.0, 11.0);
    for (int t = 0; t < 500; ++t) {
      const Point2D p{ux(rng), uy(rng)};
      const auto x0 = static_cast<std::size_t>(p.x), y0 = static_cast<std::size_t>(p.y);
      const std::size_t x1 = std::min<std::size_t>(x0 + 1, 15), y1 = std::min<std::size_t>(y0 + 1, 11);
      const double lo = std::min({m.at(x0, y0), m.at(x1, y0), m.at(x0, y1), m.at(x1, y1)});
      const double hi = std::max({m.at(x0, y0), m.at(x1, y0), m.at(x0, y1), m.at(x1, y1)});
      const double d = sample_bilinear(m, p);
      CHECK(d >= lo - 1e-9);
      CHECK(d <= hi + 1e-9);
    }
  }
  SUBCASE("read_depth_at marks validity per point") {
    const DepthMap m = ramp(4, 4, 1000.0, 1.0, 1.0);
    const std::vector<Point2D> pts{{1.0, 1.0}, {10.0, 1.0}, {2.5, 0.5}};
    const JointDepthVector v = read_depth_at(m, pts);
    REQUIRE(v.size() == 3);
    CHECK(v.valid(0));
    CHECK_FALSE(v.valid(1));
    CHECK(v.valid(2));
    CHECK(v.valid_count() == 2);
  }
}

TEST_CASE("DepthMap construction") {
  CHECK_THROWS_AS(DepthMap(0, 0), InvalidInputError);
  CHECK_THROWS_AS(DepthMap(0, 4), InvalidInputError);
  CHECK_THROWS(DepthMap(2, 2, std::vector<float>(3, 1.0f)));
  const DepthMap m(3, 2);
  for (float v : m.values()) CHECK(std::isnan(v));
}

TEST_CASE("DMAP round trip is bit-exact, NaN included") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> v(300.0f, 9000.0f);
  std::vector<float> vals(64 * 48);
  for (auto& x : vals) x = v(rng);
  vals[5] = std::numeric_limits<float>::quiet_NaN();
  vals[100] = std::numeric_limits<float>::quiet_NaN();
  const DepthMap m(64, 48, vals);
  const fs::path p = temp_file("roundtrip.dmap");
  save_depth(m, p);
  const DepthMap back = load_depth(p);
  CHECK(back.width() == 64);
  CHECK(back.height() == 48);
  CHECK(back.bit_equal(m));
  CHECK(fs::file_size(p) == 16 + 4 * 64 * 48);

  std::ifstream in(p, std::ios::binary);
  char head[16];
  in.read(head, 16);
  CHECK(std::string(head, 4) == "DMAP");
  std::uint32_t version = 0, w = 0, h = 0;
  std::memcpy(&version, head + 4, 4);
  std::memcpy(&w, head + 8, 4);
  std::memcpy(&h, head + 12, 4);
  CHECK(version == 1);
  CHECK(w == 64);
  CHECK(h == 48);
}

TEST_CASE("DMAP error handling") {
  const DepthMap m(4, 3, std::vector<float>(12, 1000.0f));
  const fs::path p = temp_file("bad.dmap");
  save_depth(m, p);
  std::string bytes;
  {
    std::ifstream in(p, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  SUBCASE("wrong magic") {
    std::string b = bytes;
    b[0] = 'X';
    write(b);
    CHECK_THROWS_AS(load_depth(p), FormatError);
  }
  SUBCASE("unknown version") {
    std::string b = bytes;
    b[4] = 7;
    write(b);
    CHECK_THROWS_AS(load_depth(p), FormatError);
  }
  SUBCASE("zero shape") {
    std::string b = bytes;
    for (int i = 8; i < 12; ++i) b[i] = 0;
    write(b);
    CHECK_THROWS_AS(load_depth(p), FormatError);
  }
  SUBCASE("truncated payload") {
    write(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_depth(p), IoError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_depth(temp_file("does-not-exist.dmap")), IoError); }
}
