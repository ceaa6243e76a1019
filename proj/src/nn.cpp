#include "wdpose/nn.hpp"

#include <algorithm>
#include <cmath>

#include "wdpose/error.hpp"
#include "wdpose/kernels.hpp"

namespace wdpose::nn {

Matrix linear_forward(const Matrix& x, std::span<const double> weight, std::span<const double> bias,
                      std::size_t out) {
  if (weight.size() != out * x.cols || bias.size() != out)
    throw ShapeError("linear_forward: parameter shape does not match input width");
  Matrix y(x.rows, out);
  kernels::linear_forward(x.data, weight, bias, y.data, x.rows, x.cols, out);
  return y;
}

Matrix linear_backward(const Matrix& dy, const Matrix& x, std::span<const double> weight,
                       std::span<double> dweight, std::span<double> dbias) {
  if (dy.rows != x.rows || weight.size() != dy.cols * x.cols)
    throw ShapeError("linear_backward: shape mismatch");
  Matrix dx(x.rows, x.cols);
  kernels::linear_backward_input(dy.data, weight, dx.data, x.rows, x.cols, dy.cols);
  kernels::linear_backward_params(dy.data, x.data, dweight, dbias, x.rows, x.cols, dy.cols);
  return dx;
}

Matrix layer_norm_forward(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                          LayerNormCache& cache, double eps) {
  if (gain.size() != x.cols || bias.size() != x.cols)
    throw ShapeError("layer_norm_forward: parameter width mismatch");
  Matrix y(x.rows, x.cols);
  cache.xhat = Matrix(x.rows, x.cols);
  cache.inv_std.assign(x.rows, 0.0);
  kernels::layer_norm_forward(x.data, gain, bias, cache.xhat.data, cache.inv_std, y.data, x.rows,
                              x.cols, eps);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, std::span<const double> gain,
                           std::span<double> dgain, std::span<double> dbias) {
  if (dy.rows != cache.xhat.rows || dy.cols != cache.xhat.cols)
    throw ShapeError("layer_norm_backward: shape mismatch");
  Matrix dx(dy.rows, dy.cols);
  kernels::layer_norm_backward(dy.data, cache.xhat.data, cache.inv_std, gain, dx.data, dgain, dbias,
                               dy.rows, dy.cols);
  return dx;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, std::span<Rng> rngs) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidParameterError("dropout rate must be in [0, 1)");
  if (rngs.size() != rows) throw ShapeError("dropout_mask: need one generator per row");
  Matrix mask(rows, cols);
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mask(r, c) = unit(rngs[r]) < keep ? scale : 0.0;
  return mask;
}

Matrix relu_forward(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  return y;
}

Matrix relu_backward(const Matrix& dy, const Matrix& y) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (!(y.data[i] > 0.0)) dx.data[i] = 0.0;
  return dx;
}

namespace {

Matrix hadamard(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace

Matrix dense_forward(const Matrix& x, const DenseParams& p, Mode mode, double dropout,
                     std::span<Rng> row_rngs, DenseCache& cache) {
  if (x.cols != p.in) throw ShapeError("dense_forward: input width mismatch");
  cache.input = x;
  Matrix z = linear_forward(x, p.weight, p.bias, p.out);
  Matrix n = layer_norm_forward(z, p.gain, p.shift, cache.norm);
  if (mode == Mode::Train && dropout > 0.0) {
    cache.mask = dropout_mask(n.rows, n.cols, dropout, row_rngs);
    n = hadamard(n, cache.mask);
  } else {
    cache.mask = Matrix();
  }
  cache.output = relu_forward(n);
  return cache.output;
}

Matrix dense_backward(const Matrix& dy, const DenseParams& p, const DenseCache& cache, const DenseGrads& g) {
  Matrix d = relu_backward(dy, cache.output);
  if (!cache.mask.data.empty()) d = hadamard(d, cache.mask);
  d = layer_norm_backward(d, cache.norm, p.gain, g.gain, g.shift);
  return linear_backward(d, cache.input, p.weight, g.weight, g.bias);
}

Matrix residual_block_forward(const Matrix& h, const DenseParams& first, const DenseParams& second,
                              Mode mode, double dropout, std::span<Rng> row_rngs, BlockCache& cache) {
  if (first.in != h.cols || second.out != h.cols)
    throw ShapeError("residual block must preserve width");
  Matrix a = dense_forward(h, first, mode, dropout, row_rngs, cache.first);
  Matrix out = dense_forward(a, second, mode, dropout, row_rngs, cache.second);
  add_inplace(out, h);
  return out;
}

Matrix residual_block_backward(const Matrix& dy, const DenseParams& first, const DenseParams& second,
                               const BlockCache& cache, const DenseGrads& g_first,
                               const DenseGrads& g_second) {
  Matrix da = dense_backward(dy, second, cache.second, g_second);
  Matrix dh = dense_backward(da, first, cache.first, g_first);
  add_inplace(dh, dy);
  return dh;
}

void MlpConfig::validate() const {
  if (input_width == 0 || output_width == 0 || hidden_width == 0)
    throw ConfigError("MLP widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient size mismatch");
  if (state.m.empty() && state.v.empty() && state.step == 0) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: state size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

double lr_schedule(double base_lr, int epoch, double decay, int every) {
  if (epoch < 0 || every <= 0) throw InvalidParameterError("lr_schedule: bad epoch or period");
  return base_lr * std::pow(decay, epoch / every);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<TensorSlot> make_layout(const MlpConfig& c) {
  std::vector<TensorSlot> slots;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    slots.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    add(prefix + ".weight", out, in);
    add(prefix + ".bias", 1, out);
    add(prefix + ".gain", 1, out);
    add(prefix + ".shift", 1, out);
  };
  dense("input", c.input_width, c.hidden_width);
  for (std::size_t b = 0; b < c.residual_blocks; ++b) {
    dense("block" + std::to_string(b) + ".first", c.hidden_width, c.hidden_width);
    dense("block" + std::to_string(b) + ".second", c.hidden_width, c.hidden_width);
  }
  add("output.weight", c.output_width, c.hidden_width);
  add("output.bias", 1, c.output_width);
  return slots;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Mlp::Mlp(MlpConfig config) : config_(config) {
  config_.validate();
  layout_ = make_layout(config_);
  const auto& last = layout_.back();
  params_.assign(last.offset + last.size(), 0.0);
}

Mlp Mlp::initialized(MlpConfig config, std::uint64_t seed) {
  Mlp net(config);
  for (std::size_t k = 0; k < net.layout_.size(); ++k) {
    const auto& s = net.layout_[k];
    auto values = std::span<double>(net.params_).subspan(s.offset, s.size());
    if (ends_with(s.name, ".weight")) {
      const double bound = std::sqrt(6.0 / static_cast<double>(s.cols));
      Rng rng = make_rng(seed, k);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : values) v = dist(rng);
    } else if (ends_with(s.name, ".gain")) {
      std::fill(values.begin(), values.end(), 1.0);
    }
  }
  return net;
}

const TensorSlot& Mlp::slot(std::string_view name) const {
  for (const auto& s : layout_)
    if (s.name == name) return s;
  throw UsageError("no parameter tensor named '" + std::string(name) + "'");
}

std::span<const double> Mlp::tensor(std::string_view name) const {
  const auto& s = slot(name);
  return std::span<const double>(params_).subspan(s.offset, s.size());
}

std::span<double> Mlp::mutable_params() {
  ++version_;
  return params_;
}

std::span<double> Mlp::mutable_tensor(std::string_view name) {
  const auto& s = slot(name);
  return mutable_params().subspan(s.offset, s.size());
}

DenseParams Mlp::dense_params(const std::string& prefix, std::size_t in, std::size_t out) const {
  return {tensor(prefix + ".weight"), tensor(prefix + ".bias"), tensor(prefix + ".gain"),
          tensor(prefix + ".shift"), in, out};
}

DenseGrads Mlp::dense_grads(std::span<double> g, const std::string& prefix) const {
  auto view = [&](const std::string& name) {
    const auto& s = slot(name);
    return g.subspan(s.offset, s.size());
  };
  return {view(prefix + ".weight"), view(prefix + ".bias"), view(prefix + ".gain"),
          view(prefix + ".shift")};
}

Matrix Mlp::forward(const Matrix& x, Mode mode, std::uint64_t seed, Cache* cache) const {
  if (x.cols != config_.input_width)
    throw ShapeError("network expects input width " + std::to_string(config_.input_width) + ", got " +
                     std::to_string(x.cols));
  for (double v : x.data)
    if (!std::isfinite(v)) throw NumericError("network input is not finite");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.owner = this;
  c.version = version_;
  c.mode = mode;
  c.blocks.assign(config_.residual_blocks, {});

  std::vector<Rng> rngs;
  if (mode == Mode::Train && config_.dropout > 0.0) {
    rngs.reserve(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) rngs.push_back(make_rng(seed, r));
  } else {
    rngs.resize(x.rows);
  }

  const std::size_t H = config_.hidden_width;
  Matrix h = dense_forward(x, dense_params("input", config_.input_width, H), mode, config_.dropout,
                           rngs, c.input_unit);
  for (std::size_t b = 0; b < config_.residual_blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    h = residual_block_forward(h, dense_params(p + ".first", H, H), dense_params(p + ".second", H, H),
                               mode, config_.dropout, rngs, c.blocks[b]);
  }
  c.last_hidden = h;
  Matrix y = linear_forward(h, tensor("output.weight"), tensor("output.bias"), config_.output_width);
  for (double v : y.data)
    if (!std::isfinite(v)) throw NumericError("network produced a non-finite output");
  return y;
}

Mlp::Gradients Mlp::backward(const Cache& cache, const Matrix& dy) const {
  if (cache.owner != this || cache.version != version_)
    throw UsageError("backward called with a cache from a different or stale forward pass");
  if (dy.cols != config_.output_width || dy.rows != cache.last_hidden.rows)
    throw ShapeError("backward: output gradient shape mismatch");

  Gradients g;
  g.params.assign(params_.size(), 0.0);
  std::span<double> gp = g.params;
  const std::size_t H = config_.hidden_width;

  const auto& ow = slot("output.weight");
  const auto& ob = slot("output.bias");
  Matrix dh = linear_backward(dy, cache.last_hidden, tensor("output.weight"),
                              gp.subspan(ow.offset, ow.size()), gp.subspan(ob.offset, ob.size()));
  for (std::size_t b = config_.residual_blocks; b-- > 0;) {
    const std::string p = "block" + std::to_string(b);
    dh = residual_block_backward(dh, dense_params(p + ".first", H, H), dense_params(p + ".second", H, H),
                                 cache.blocks[b], dense_grads(gp, p + ".first"),
                                 dense_grads(gp, p + ".second"));
  }
  g.input = dense_backward(dh, dense_params("input", config_.input_width, H), cache.input_unit,
                           dense_grads(gp, "input"));
  return g;
}

void Mlp::apply_adam(std::span<const double> grads, AdamState& state, double lr) {
  adam_step(params_, grads, state, lr);
  ++version_;
}

std::uint64_t activation_signature(const Mlp::Cache& cache, std::uint64_t seed) {
  std::uint64_t h = mix_seed(seed);
  auto absorb = [&h](const DenseCache& c) {
    for (double v : c.output.data) h = mix_seed(h ^ (v > 0.0 ? 0x9eULL : 0x51ULL));
  };
  absorb(cache.input_unit);
  for (const auto& b : cache.blocks) {
    absorb(b.first);
    absorb(b.second);
  }
  return h;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const MlpConfig& c) {
  return {{"input_width", c.input_width},         {"output_width", c.output_width},
          {"hidden_width", c.hidden_width},       {"residual_blocks", c.residual_blocks},
          {"dropout", c.dropout}};
}

MlpConfig mlp_config_from_json(const nlohmann::json& doc) {
  MlpConfig c;
  c.input_width = doc.at("input_width").get<std::size_t>();
  c.output_width = doc.at("output_width").get<std::size_t>();
  c.hidden_width = doc.at("hidden_width").get<std::size_t>();
  c.residual_blocks = doc.at("residual_blocks").get<std::size_t>();
  c.dropout = doc.at("dropout").get<double>();
  return c;
}

nlohmann::json to_json(const Mlp& net) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& s : net.layout()) {
    const auto values = net.params().subspan(s.offset, s.size());
    params[s.name] = {{"shape", {s.rows, s.cols}},
                      {"values", std::vector<double>(values.begin(), values.end())}};
  }
  return {{"version", kCheckpointVersion}, {"config", to_json(net.config())}, {"params", params}};
}

Mlp mlp_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.contains("version")) throw FormatError("checkpoint has no version field");
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Mlp net(mlp_config_from_json(doc.at("config")));
    const auto& params = doc.at("params");
    if (params.size() != net.layout().size()) throw FormatError("checkpoint tensor count mismatch");
    auto dst = net.mutable_params();
    for (const auto& s : net.layout()) {
      const auto& t = params.at(s.name);
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape != std::vector<std::size_t>{s.rows, s.cols})
        throw FormatError("tensor '" + s.name + "' has the wrong shape");
      const auto values = t.at("values").get<std::vector<double>>();
      if (values.size() != s.size()) throw FormatError("tensor '" + s.name + "' has the wrong size");
      std::copy(values.begin(), values.end(), dst.begin() + static_cast<std::ptrdiff_t>(s.offset));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what());
  }
}

}  // namespace wdpose::nn
