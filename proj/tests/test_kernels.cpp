#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "wdpose/kernels.hpp"

using namespace wdpose;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double mean = 0.0) {
  std::normal_distribution<double> d(mean, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Unit-scale inputs and at most a few hundred terms per sum.
bool close(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-11 * (1.0 + std::abs(b[i]))) return false;
  return true;
}

struct Outputs {
  std::vector<double> y, dx, dw, db, xhat, inv, yn, dxn, dg, dbn;
  friend bool operator==(const Outputs&, const Outputs&) = default;
};

struct Shape {
  std::size_t rows, in, out;
};

}  // namespace

// The parallel kernels fix their summation order, so their results do not
// depend on the thread count. The serial reference sums in plain loop order
// and agrees up to round-off.
TEST_CASE("parallel kernels: thread-count invariance and agreement with the serial reference") {
  std::mt19937_64 rng(11);
  const int saved = omp_get_max_threads();
  for (const Shape s : {Shape{1, 1, 1}, Shape{3, 7, 5}, Shape{64, 51, 128}, Shape{17, 256, 33}}) {
    const auto x = random_vec(s.rows * s.in, rng);
    const auto w = random_vec(s.out * s.in, rng);
    const auto b = random_vec(s.out, rng);
    const auto dy = random_vec(s.rows * s.out, rng);
    const auto gain = random_vec(s.out, rng, 1.0);
    const auto bias = random_vec(s.out, rng);
    const std::size_t R = s.rows, I = s.in, O = s.out;
    auto run = [&](bool parallel) {
      Outputs o{std::vector<double>(R * O), std::vector<double>(R * I), std::vector<double>(O * I, 0.5),
                std::vector<double>(O, -0.25), std::vector<double>(R * O), std::vector<double>(R),
                std::vector<double>(R * O), std::vector<double>(R * O), std::vector<double>(O, 0.1),
                std::vector<double>(O, 0.2)};
      if (parallel) {
        kernels::linear_forward(x, w, b, o.y, R, I, O);
        kernels::linear_backward_input(dy, w, o.dx, R, I, O);
        kernels::linear_backward_params(dy, x, o.dw, o.db, R, I, O);
        kernels::layer_norm_forward(o.y, gain, bias, o.xhat, o.inv, o.yn, R, O, 1e-8);
        kernels::layer_norm_backward(dy, o.xhat, o.inv, gain, o.dxn, o.dg, o.dbn, R, O);
      } else {
        kernels::serial::linear_forward(x, w, b, o.y, R, I, O);
        kernels::serial::linear_backward_input(dy, w, o.dx, R, I, O);
        kernels::serial::linear_backward_params(dy, x, o.dw, o.db, R, I, O);
        kernels::serial::layer_norm_forward(o.y, gain, bias, o.xhat, o.inv, o.yn, R, O, 1e-8);
        kernels::serial::layer_norm_backward(dy, o.xhat, o.inv, gain, o.dxn, o.dg, o.dbn, R, O);
      }
      return o;
    };
    const Outputs ref = run(false);
    omp_set_num_threads(1);
    const Outputs one = run(true);
    CHECK(close(one.y, ref.y));
    CHECK(close(one.dx, ref.dx));
    CHECK(close(one.dw, ref.dw));
    CHECK(close(one.db, ref.db));
    CHECK(close(one.xhat, ref.xhat));
    CHECK(close(one.inv, ref.inv));
    CHECK(close(one.yn, ref.yn));
    CHECK(close(one.dxn, ref.dxn));
    CHECK(close(one.dg, ref.dg));
    CHECK(close(one.dbn, ref.dbn));
    for (int threads : {2, 3, 4, 7}) {
      CAPTURE(threads);
      omp_set_num_threads(threads);
      const Outputs many = run(true);
      CHECK(bit_equal(many.y, one.y));
      CHECK(bit_equal(many.dx, one.dx));
      CHECK(bit_equal(many.dw, one.dw));
      CHECK(bit_equal(many.db, one.db));
      CHECK(bit_equal(many.yn, one.yn));
      CHECK(bit_equal(many.dxn, one.dxn));
      CHECK(bit_equal(many.dg, one.dg));
      CHECK(bit_equal(many.dbn, one.dbn));
    }
  }
  omp_set_num_threads(saved);
}

TEST_CASE("linear_forward against a hand computation") {
  const std::vector<double> x{1.0, 2.0, 3.0, -1.0, 0.0, 4.0};  // 2 x 3
  const std::vector<double> w{1.0, 0.0, -1.0, 2.0, 1.0, 0.5};  // 2 x 3
  const std::vector<double> b{0.5, -1.0};
  std::vector<double> y(4);
  kernels::linear_forward(x, w, b, y, 2, 3, 2);
  CHECK(y == std::vector<double>{-1.5, 4.5, -4.5, -1.0});
}
