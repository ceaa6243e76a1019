#pragma once

#include <cstddef>
#include <span>

// Dense batch kernels behind the nn module. All matrices are row-major with
// one sample per row; linear weights are (out x in).
//
// The top-level functions are OpenMP-parallel. Each output element is
// produced by exactly one thread with a fixed summation order, so results
// are bit-identical for any thread count. `serial::` holds the plain loop
// reference implementations the tests compare against.

namespace wdpose::kernels {

// y[r, o] = b[o] + sum_i x[r, i] * w[o, i]
void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out);

// dx[r, i] = sum_o dy[r, o] * w[o, i]
void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out);

// dw[o, i] += sum_r dy[r, o] * x[r, i];  db[o] += sum_r dy[r, o]
void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, std::size_t rows,
                            std::size_t in, std::size_t out);

// Per row: xhat = (x - mean) * inv_std, y = gain * xhat + bias, with
// inv_std = 1 / sqrt(var + eps) and the biased variance.
void layer_norm_forward(std::span<const double> x, std::span<const double> gain,
                        std::span<const double> bias, std::span<double> xhat,
                        std::span<double> inv_std, std::span<double> y, std::size_t rows,
                        std::size_t n, double eps);

// dx overwritten; dgain, dbias accumulated.
void layer_norm_backward(std::span<const double> dy, std::span<const double> xhat,
                         std::span<const double> inv_std, std::span<const double> gain,
                         std::span<double> dx, std::span<double> dgain, std::span<double> dbias,
                         std::size_t rows, std::size_t n);

namespace serial {

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out);
void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out);
void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, std::size_t rows,
                            std::size_t in, std::size_t out);
void layer_norm_forward(std::span<const double> x, std::span<const double> gain,
                        std::span<const double> bias, std::span<double> xhat,
                        std::span<double> inv_std, std::span<double> y, std::size_t rows,
                        std::size_t n, double eps);
void layer_norm_backward(std::span<const double> dy, std::span<const double> xhat,
                         std::span<const double> inv_std, std::span<const double> gain,
                         std::span<double> dx, std::span<double> dgain, std::span<double> dbias,
                         std::size_t rows, std::size_t n);

}  // namespace serial

}  // namespace wdpose::kernels
