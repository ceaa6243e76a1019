#include "wdpose/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace wdpose::kernels {

namespace {

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;
constexpr std::size_t kTile = 4;

inline void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out) {
  // Register tiles of kTile rows x kTile outputs over a transposed copy of
  // w. Every y[r, o] is still summed in input order by the single thread
  // that owns its row block.
  std::vector<double> wt(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = w[o * in + i];
  const auto blocks = static_cast<std::int64_t>((rows + kTile - 1) / kTile);
  const bool par = rows * in * out >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * kTile;
    const std::size_t nr = std::min(kTile, rows - r0);
    for (std::size_t o0 = 0; o0 < out; o0 += kTile) {
      const std::size_t no = std::min(kTile, out - o0);
      double acc[kTile][kTile] = {};
      if (nr == kTile && no == kTile) {
        for (std::size_t i = 0; i < in; ++i) {
          const double* wi = &wt[i * out + o0];
          for (std::size_t r = 0; r < kTile; ++r) {
            const double xr = x[(r0 + r) * in + i];
            for (std::size_t o = 0; o < kTile; ++o) acc[r][o] += xr * wi[o];
          }
        }
      } else {
        for (std::size_t i = 0; i < in; ++i)
          for (std::size_t r = 0; r < nr; ++r)
            for (std::size_t o = 0; o < no; ++o) acc[r][o] += x[(r0 + r) * in + i] * wt[i * out + o0 + o];
      }
      for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t o = 0; o < no; ++o) y[(r0 + r) * out + o0 + o] = b[o0 + o] + acc[r][o];
    }
  }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out) {
  const auto blocks = static_cast<std::int64_t>((rows + kTile - 1) / kTile);
  const bool par = rows * in * out >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * kTile;
    const std::size_t nr = std::min(kTile, rows - r0);
    for (std::size_t i0 = 0; i0 < in; i0 += kTile) {
      const std::size_t ni = std::min(kTile, in - i0);
      double acc[kTile][kTile] = {};
      if (nr == kTile && ni == kTile) {
        for (std::size_t o = 0; o < out; ++o) {
          const double* wo = &w[o * in + i0];
          for (std::size_t r = 0; r < kTile; ++r) {
            const double g = dy[(r0 + r) * out + o];
            for (std::size_t i = 0; i < kTile; ++i) acc[r][i] += g * wo[i];
          }
        }
      } else {
        for (std::size_t o = 0; o < out; ++o)
          for (std::size_t r = 0; r < nr; ++r)
            for (std::size_t i = 0; i < ni; ++i) acc[r][i] += dy[(r0 + r) * out + o] * w[o * in + i0 + i];
      }
      for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t i = 0; i < ni; ++i) dx[(r0 + r) * in + i0 + i] = acc[r][i];
    }
  }
}

void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, std::size_t rows,
                            std::size_t in, std::size_t out) {
  const auto blocks = static_cast<std::int64_t>((out + kTile - 1) / kTile);
  const bool par = rows * in * out >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t o0 = static_cast<std::size_t>(blk) * kTile;
    const std::size_t no = std::min(kTile, out - o0);
    for (std::size_t o = o0; o < o0 + no; ++o) {
      double bsum = 0.0;
      for (std::size_t r = 0; r < rows; ++r) bsum += dy[r * out + o];
      db[o] += bsum;
    }
    for (std::size_t i0 = 0; i0 < in; i0 += kTile) {
      const std::size_t ni = std::min(kTile, in - i0);
      double acc[kTile][kTile] = {};
      if (no == kTile && ni == kTile) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = &x[r * in + i0];
          for (std::size_t o = 0; o < kTile; ++o) {
            const double g = dy[r * out + o0 + o];
            for (std::size_t i = 0; i < kTile; ++i) acc[o][i] += g * xr[i];
          }
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < no; ++o)
            for (std::size_t i = 0; i < ni; ++i) acc[o][i] += dy[r * out + o0 + o] * x[r * in + i0 + i];
      }
      for (std::size_t o = 0; o < no; ++o)
        for (std::size_t i = 0; i < ni; ++i) dw[(o0 + o) * in + i0 + i] += acc[o][i];
    }
  }
}

void layer_norm_forward(std::span<const double> x, std::span<const double> gain,
                        std::span<const double> bias, std::span<double> xhat,
                        std::span<double> inv_std, std::span<double> y, std::size_t rows,
                        std::size_t n, double eps) {
  const bool par = rows * n >= kParallelWork / 8;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t rr = 0; rr < static_cast<std::int64_t>(rows); ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* xr = &x[r * n];
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xr[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(n);
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std[r] = s;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (xr[i] - mean) * s;
      xhat[r * n + i] = h;
      y[r * n + i] = gain[i] * h + bias[i];
    }
  }
}

void layer_norm_backward(std::span<const double> dy, std::span<const double> xhat,
                         std::span<const double> inv_std, std::span<const double> gain,
                         std::span<double> dx, std::span<double> dgain, std::span<double> dbias,
                         std::size_t rows, std::size_t n) {
  const bool par = rows * n >= kParallelWork / 8;
  const double inv_n = 1.0 / static_cast<double>(n);
#pragma omp parallel if (par)
  {
#pragma omp for schedule(static)
    for (std::int64_t rr = 0; rr < static_cast<std::int64_t>(rows); ++rr) {
      const auto r = static_cast<std::size_t>(rr);
      double mean_g = 0.0, mean_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = dy[r * n + i] * gain[i];
        mean_g += g;
        mean_gx += g * xhat[r * n + i];
      }
      mean_g *= inv_n;
      mean_gx *= inv_n;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = dy[r * n + i] * gain[i];
        dx[r * n + i] = inv_std[r] * (g - mean_g - xhat[r * n + i] * mean_gx);
      }
    }
#pragma omp for schedule(static)
    for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double sg = 0.0, sb = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        sg += dy[r * n + i] * xhat[r * n + i];
        sb += dy[r * n + i];
      }
      dgain[i] += sg;
      dbias[i] += sb;
    }
  }
}

namespace serial {

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w[o * in + i];
      y[r * out + o] = b[o] + s;
    }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += dy[r * out + o] * w[o * in + i];
      dx[r * in + i] = s;
    }
}

void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, std::size_t rows,
                            std::size_t in, std::size_t out) {
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += dy[r * out + o] * x[r * in + i];
      dw[o * in + i] += s;
    }
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += dy[r * out + o];
    db[o] += s;
  }
}

void layer_norm_forward(std::span<const double> x, std::span<const double> gain,
                        std::span<const double> bias, std::span<double> xhat,
                        std::span<double> inv_std, std::span<double> y, std::size_t rows,
                        std::size_t n, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[r * n + i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[r * n + i] - mean) * (x[r * n + i] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (x[r * n + i] - mean) * inv_std[r];
      y[r * n + i] = gain[i] * xhat[r * n + i] + bias[i];
    }
  }
}

void layer_norm_backward(std::span<const double> dy, std::span<const double> xhat,
                         std::span<const double> inv_std, std::span<const double> gain,
                         std::span<double> dx, std::span<double> dgain, std::span<double> dbias,
                         std::size_t rows, std::size_t n) {
  const double nn = static_cast<double>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += dy[r * n + i] * gain[i];
      sum_gx += dy[r * n + i] * gain[i] * xhat[r * n + i];
    }
    for (std::size_t i = 0; i < n; ++i)
      dx[r * n + i] = inv_std[r] * (dy[r * n + i] * gain[i] - sum_g / nn - xhat[r * n + i] * sum_gx / nn);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < rows; ++r) {
      dgain[i] += dy[r * n + i] * xhat[r * n + i];
      dbias[i] += dy[r * n + i];
    }
}

}  // namespace serial

}  // namespace wdpose::kernels
