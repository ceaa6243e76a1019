#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wdpose/random.hpp"

namespace wdpose::nn {

/// Row-major dense matrix; one sample per row.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

enum class Mode { Train, Eval };

inline constexpr double kLayerNormEps = 1e-8;

// ---------------------------------------------------------------------------
// Layer primitives. Each backward returns the input gradient and accumulates
// parameter gradients into the supplied spans.

Matrix linear_forward(const Matrix& x, std::span<const double> weight, std::span<const double> bias,
                      std::size_t out);
Matrix linear_backward(const Matrix& dy, const Matrix& x, std::span<const double> weight,
                       std::span<double> dweight, std::span<double> dbias);

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};
Matrix layer_norm_forward(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                          LayerNormCache& cache, double eps = kLayerNormEps);
Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, std::span<const double> gain,
                           std::span<double> dgain, std::span<double> dbias);

/// Inverted dropout mask: each entry is 0 with probability `rate`, else
/// 1 / (1 - rate). Row r draws from rngs[r].
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, std::span<Rng> rngs);

Matrix relu_forward(const Matrix& x);
Matrix relu_backward(const Matrix& dy, const Matrix& y);

// ---------------------------------------------------------------------------
// Dense unit: linear -> LayerNorm -> dropout -> ReLU.

struct DenseParams {
  std::span<const double> weight, bias, gain, shift;
  std::size_t in = 0, out = 0;
};
struct DenseGrads {
  std::span<double> weight, bias, gain, shift;
};
struct DenseCache {
  Matrix input;
  LayerNormCache norm;
  Matrix mask;  // empty in eval mode or with zero dropout
  Matrix output;
};

Matrix dense_forward(const Matrix& x, const DenseParams& p, Mode mode, double dropout,
                     std::span<Rng> row_rngs, DenseCache& cache);
Matrix dense_backward(const Matrix& dy, const DenseParams& p, const DenseCache& cache, const DenseGrads& g);

/// Residual block: h + dense(dense(h)).
struct BlockCache {
  DenseCache first, second;
};
Matrix residual_block_forward(const Matrix& h, const DenseParams& first, const DenseParams& second,
                              Mode mode, double dropout, std::span<Rng> row_rngs, BlockCache& cache);
Matrix residual_block_backward(const Matrix& dy, const DenseParams& first, const DenseParams& second,
                               const BlockCache& cache, const DenseGrads& g_first,
                               const DenseGrads& g_second);

// ---------------------------------------------------------------------------

struct MlpConfig {
  std::size_t input_width = 0;
  std::size_t output_width = 0;
  std::size_t hidden_width = 1024;
  std::size_t residual_blocks = 2;
  double dropout = 0.5;

  /// Throws ConfigError.
  void validate() const;
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

/// Named tensor inside the flat parameter vector.
struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Throws NumericError (leaving params and state
/// untouched) when a gradient is non-finite, ShapeError on size mismatch.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

/// base_lr * decay^floor(epoch / every)
double lr_schedule(double base_lr, int epoch, double decay = 0.96, int every = 4);

/// Input dense unit, `residual_blocks` residual blocks, then a linear
/// output layer. All parameters live in one flat vector.
class Mlp {
 public:
  struct Cache {
    const Mlp* owner = nullptr;
    std::uint64_t version = 0;
    Mode mode = Mode::Eval;
    DenseCache input_unit;
    std::vector<BlockCache> blocks;
    Matrix last_hidden;
  };
  struct Gradients {
    std::vector<double> params;
    Matrix input;
  };

  /// All-zero parameters.
  explicit Mlp(MlpConfig config);
  /// Kaiming-uniform weights, zero biases, unit LayerNorm gains.
  static Mlp initialized(MlpConfig config, std::uint64_t seed);

  const MlpConfig& config() const { return config_; }
  const std::vector<TensorSlot>& layout() const { return layout_; }
  const TensorSlot& slot(std::string_view name) const;
  std::span<const double> params() const { return params_; }
  std::span<const double> tensor(std::string_view name) const;
  /// Mutable access invalidates outstanding caches.
  std::span<double> mutable_params();
  std::span<double> mutable_tensor(std::string_view name);
  std::uint64_t version() const { return version_; }
  std::size_t parameter_count() const { return params_.size(); }

  /// Rows of `x` are samples. Dropout masks for row r are drawn from a
  /// stream derived from (seed, r), so a row's output does not depend on
  /// the other rows in the batch. Throws ShapeError / NumericError.
  Matrix forward(const Matrix& x, Mode mode, std::uint64_t seed, Cache* cache = nullptr) const;

  /// Throws UsageError if `cache` came from another network or from
  /// parameters that have since changed.
  Gradients backward(const Cache& cache, const Matrix& dy) const;

  void apply_adam(std::span<const double> grads, AdamState& state, double lr);

 private:
  DenseParams dense_params(const std::string& prefix, std::size_t in, std::size_t out) const;
  DenseGrads dense_grads(std::span<double> g, const std::string& prefix) const;

  MlpConfig config_;
  std::vector<TensorSlot> layout_;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
};

/// Hash of which ReLU units were active in a forward pass. Two passes with
/// equal signatures lie on the same linear piece of the network.
std::uint64_t activation_signature(const Mlp::Cache& cache, std::uint64_t seed = 0);

inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const MlpConfig& config);
MlpConfig mlp_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Mlp& net);
/// Throws FormatError on a missing version, unknown version or shape mismatch.
Mlp mlp_from_json(const nlohmann::json& doc);

}  // namespace wdpose::nn
