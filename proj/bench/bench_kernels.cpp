// Parallel kernels against their serial references, plus the depth renderer.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "wdpose/kernels.hpp"
#include "wdpose/synth.hpp"

namespace {

using namespace wdpose;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

struct Linear {
  std::size_t rows, in, out;
  std::vector<double> x, w, b, y, dy, dx, dw, db;
  explicit Linear(benchmark::State& s)
      : rows(static_cast<std::size_t>(s.range(0))),
        in(static_cast<std::size_t>(s.range(1))),
        out(static_cast<std::size_t>(s.range(1))),
        x(random_vector(rows * in, 1)),
        w(random_vector(out * in, 2)),
        b(random_vector(out, 3)),
        y(rows * out),
        dy(random_vector(rows * out, 4)),
        dx(rows * in),
        dw(out * in),
        db(out) {}
  void flops(benchmark::State& s) const {
    s.counters["flops"] = benchmark::Counter(2.0 * static_cast<double>(rows * in * out),
                                             benchmark::Counter::kIsIterationInvariantRate);
  }
};

template <bool Parallel>
void BM_LinearForward(benchmark::State& s) {
  Linear l(s);
  for (auto _ : s) {
    if constexpr (Parallel)
      kernels::linear_forward(l.x, l.w, l.b, l.y, l.rows, l.in, l.out);
    else
      kernels::serial::linear_forward(l.x, l.w, l.b, l.y, l.rows, l.in, l.out);
    benchmark::DoNotOptimize(l.y.data());
  }
  l.flops(s);
}

template <bool Parallel>
void BM_LinearBackward(benchmark::State& s) {
  Linear l(s);
  for (auto _ : s) {
    std::fill(l.dw.begin(), l.dw.end(), 0.0);
    std::fill(l.db.begin(), l.db.end(), 0.0);
    if constexpr (Parallel) {
      kernels::linear_backward_input(l.dy, l.w, l.dx, l.rows, l.in, l.out);
      kernels::linear_backward_params(l.dy, l.x, l.dw, l.db, l.rows, l.in, l.out);
    } else {
      kernels::serial::linear_backward_input(l.dy, l.w, l.dx, l.rows, l.in, l.out);
      kernels::serial::linear_backward_params(l.dy, l.x, l.dw, l.db, l.rows, l.in, l.out);
    }
    benchmark::DoNotOptimize(l.dw.data());
  }
  s.counters["flops"] = benchmark::Counter(4.0 * static_cast<double>(l.rows * l.in * l.out),
                                           benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& s) {
  const auto rows = static_cast<std::size_t>(s.range(0)), n = static_cast<std::size_t>(s.range(1));
  const auto x = random_vector(rows * n, 5), dy = random_vector(rows * n, 6);
  const std::vector<double> gain(n, 1.0), bias(n, 0.0);
  std::vector<double> xhat(rows * n), inv(rows), y(rows * n), dx(rows * n), dg(n), dbias(n);
  for (auto _ : s) {
    if constexpr (Parallel) {
      kernels::layer_norm_forward(x, gain, bias, xhat, inv, y, rows, n, 1e-5);
      kernels::layer_norm_backward(dy, xhat, inv, gain, dx, dg, dbias, rows, n);
    } else {
      kernels::serial::layer_norm_forward(x, gain, bias, xhat, inv, y, rows, n, 1e-5);
      kernels::serial::layer_norm_backward(dy, xhat, inv, gain, dx, dg, dbias, rows, n);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Parallel>
void BM_Render(benchmark::State& s) {
  Rng rng(7);
  const synth::SceneConfig cfg;
  const synth::Scene scene = synth::generate_scene(rng, cfg, SkeletonSpec::mupots17(), 4, cfg.root_depth);
  for (auto _ : s) {
    auto m = Parallel ? synth::render_clean(scene.geometry, scene.camera, scene.width, scene.height)
                      : synth::render_clean_serial(scene.geometry, scene.camera, scene.width, scene.height);
    benchmark::DoNotOptimize(m.values().data());
  }
  s.counters["pixels"] = benchmark::Counter(static_cast<double>(scene.width * scene.height),
                                            benchmark::Counter::kIsIterationInvariantRate);
}

void shapes(benchmark::internal::Benchmark* b) {
  for (int rows : {32, 64, 512})
    for (int width : {64, 256, 1024}) b->Args({rows, width});
}

}  // namespace

BENCHMARK(BM_LinearForward<true>)->Name("linear_forward/parallel")->Apply(shapes);
BENCHMARK(BM_LinearForward<false>)->Name("linear_forward/serial")->Apply(shapes);
BENCHMARK(BM_LinearBackward<true>)->Name("linear_backward/parallel")->Apply(shapes);
BENCHMARK(BM_LinearBackward<false>)->Name("linear_backward/serial")->Apply(shapes);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/parallel")->Apply(shapes);
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/serial")->Apply(shapes);
BENCHMARK(BM_Render<true>)->Name("render/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Render<false>)->Name("render/serial")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
