#include "wdpose/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "wdpose/loss.hpp"
#include "wdpose/nn.hpp"
#include "wdpose/pipeline.hpp"
#include "wdpose/random.hpp"

namespace wdpose::gradcheck {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return denom > 0.0 ? std::abs(analytic - numeric) / denom : 0.0;
}

Comparison compare(std::span<double> theta, std::span<const double> analytic, const std::function<Probe()>& loss,
                   double h) {
  const std::uint64_t region = loss().region;
  std::vector<double> numeric(theta.size());
  std::vector<bool> skip(theta.size(), false);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const Probe plus = loss();
    theta[i] = saved - h;
    const Probe minus = loss();
    theta[i] = saved;
    numeric[i] = (plus.value - minus.value) / (2.0 * h);
    skip[i] = plus.region != region || minus.region != region;
  }
  double scale = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i)
    if (!skip[i]) scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  const double floor = 1e-4 * scale + 1e-12;
  Comparison c;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (skip[i]) {
      ++c.skipped;
      continue;
    }
    c.max_rel_error = std::max(c.max_rel_error, relative_error(analytic[i], numeric[i], floor));
  }
  return c;
}

namespace {

using nn::Matrix;

struct Suite {
  Rng rng;
  Options opt;
  Report report;

  std::vector<double> normal(std::size_t n, double sigma = 1.0, double mean = 0.0) {
    std::normal_distribution<double> d(mean, sigma);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
  }
  Matrix matrix(std::size_t r, std::size_t c, double sigma = 1.0) {
    Matrix m(r, c);
    m.data = normal(r * c, sigma);
    return m;
  }

  void record(const std::string& name, std::span<double> theta, std::span<const double> analytic,
              const std::function<Probe()>& loss) {
    const Comparison cmp = compare(theta, analytic, loss, opt.h);
    CheckResult c{name, theta.size(), cmp.skipped, cmp.max_rel_error, false};
    c.passed = c.max_rel_error < opt.tolerance &&
               static_cast<double>(c.skipped) <= opt.max_skipped_fraction * static_cast<double>(c.entries);
    report.checks.push_back(c);
  }
  void record(const std::string& name, std::span<double> theta, std::span<const double> analytic,
              const std::function<double()>& loss) {
    record(name, theta, analytic, std::function<Probe()>([&loss] { return Probe{loss(), 0}; }));
  }
};

double weighted_sum(const Matrix& r, const Matrix& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += r.data[i] * y.data[i];
  return s;
}

std::vector<Rng> row_rngs(std::uint64_t seed, std::size_t rows) {
  std::vector<Rng> out;
  for (std::size_t r = 0; r < rows; ++r) out.push_back(make_rng(seed, r));
  return out;
}

void check_linear(Suite& s) {
  const std::size_t rows = 4, in = 6, out = 5;
  Matrix x = s.matrix(rows, in);
  auto w = s.normal(out * in, 0.4);
  auto b = s.normal(out);
  const Matrix r = s.matrix(rows, out);
  std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0);
  const Matrix dx = nn::linear_backward(r, x, w, dw, db);
  auto loss = [&] { return weighted_sum(r, nn::linear_forward(x, w, b, out)); };
  s.record("linear/input", x.data, dx.data, loss);
  s.record("linear/weight", w, dw, loss);
  s.record("linear/bias", b, db, loss);
}

void check_layer_norm(Suite& s) {
  const std::size_t rows = 4, n = 7;
  Matrix x = s.matrix(rows, n, 2.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) x(i, j) += 3.0 * static_cast<double>(i);
  auto gain = s.normal(n, 0.3, 1.0);
  auto bias = s.normal(n, 0.3);
  const Matrix r = s.matrix(rows, n);
  nn::LayerNormCache cache;
  nn::layer_norm_forward(x, gain, bias, cache);
  std::vector<double> dg(n, 0.0), db(n, 0.0);
  const Matrix dx = nn::layer_norm_backward(r, cache, gain, dg, db);
  auto loss = [&] {
    nn::LayerNormCache c;
    return weighted_sum(r, nn::layer_norm_forward(x, gain, bias, c));
  };
  s.record("layer_norm/input", x.data, dx.data, loss);
  s.record("layer_norm/gain", gain, dg, loss);
  s.record("layer_norm/bias", bias, db, loss);
}

void check_relu_dropout(Suite& s) {
  Matrix x = s.matrix(5, 6);
  for (double& v : x.data) v += v >= 0.0 ? 0.1 : -0.1;  // keep clear of the kink
  const Matrix r = s.matrix(5, 6);
  const Matrix dx = nn::relu_backward(r, nn::relu_forward(x));
  s.record("relu/input", x.data, dx.data, [&] { return weighted_sum(r, nn::relu_forward(x)); });

  auto rngs = row_rngs(7, x.rows);
  const Matrix mask = nn::dropout_mask(x.rows, x.cols, 0.5, rngs);
  Matrix dmask = r;
  for (std::size_t i = 0; i < dmask.data.size(); ++i) dmask.data[i] *= mask.data[i];
  s.record("dropout/input", x.data, dmask.data, [&] {
    double v = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) v += r.data[i] * x.data[i] * mask.data[i];
    return v;
  });
}

struct DenseTensors {
  std::vector<double> w, b, g, t;
  std::size_t in, out;
  nn::DenseParams params() const { return {w, b, g, t, in, out}; }
};

DenseTensors dense_tensors(Suite& s, std::size_t in, std::size_t out) {
  return {s.normal(out * in, 1.0 / std::sqrt(static_cast<double>(in))), s.normal(out, 0.2),
          s.normal(out, 0.2, 1.0), s.normal(out, 0.2), in, out};
}

void check_dense_and_block(Suite& s) {
  const std::size_t rows = 3, in = 5, width = 6;
  const double rate = 0.3;
  const std::uint64_t seed = 11;
  Matrix x = s.matrix(rows, in);
  DenseTensors d = dense_tensors(s, in, width);
  const Matrix r = s.matrix(rows, width);
  {
    auto rngs = row_rngs(seed, rows);
    nn::DenseCache cache;
    nn::dense_forward(x, d.params(), nn::Mode::Train, rate, rngs, cache);
    std::vector<double> gw(d.w.size(), 0.0), gb(d.b.size(), 0.0), gg(d.g.size(), 0.0), gt(d.t.size(), 0.0);
    const Matrix dx = nn::dense_backward(r, d.params(), cache, {gw, gb, gg, gt});
    auto loss = [&] {
      auto fresh = row_rngs(seed, rows);
      nn::DenseCache c;
      return weighted_sum(r, nn::dense_forward(x, d.params(), nn::Mode::Train, rate, fresh, c));
    };
    s.record("dense/input", x.data, dx.data, loss);
    s.record("dense/weight", d.w, gw, loss);
    s.record("dense/bias", d.b, gb, loss);
    s.record("dense/gain", d.g, gg, loss);
    s.record("dense/shift", d.t, gt, loss);
  }

  Matrix h = s.matrix(rows, width);
  DenseTensors a = dense_tensors(s, width, width), b = dense_tensors(s, width, width);
  auto rngs = row_rngs(seed, rows);
  nn::BlockCache cache;
  nn::residual_block_forward(h, a.params(), b.params(), nn::Mode::Train, rate, rngs, cache);
  std::vector<double> ga(a.w.size() + 3 * width, 0.0), gb(b.w.size() + 3 * width, 0.0);
  auto grads = [&](std::vector<double>& g, const DenseTensors& t) {
    std::span<double> sp = g;
    return nn::DenseGrads{sp.subspan(0, t.w.size()), sp.subspan(t.w.size(), width),
                          sp.subspan(t.w.size() + width, width), sp.subspan(t.w.size() + 2 * width, width)};
  };
  const nn::DenseGrads gfa = grads(ga, a), gfb = grads(gb, b);
  const Matrix dh = nn::residual_block_backward(r, a.params(), b.params(), cache, gfa, gfb);
  auto loss = [&] {
    auto fresh = row_rngs(seed, rows);
    nn::BlockCache c;
    return weighted_sum(r, nn::residual_block_forward(h, a.params(), b.params(), nn::Mode::Train, rate, fresh, c));
  };
  s.record("residual_block/input", h.data, dh.data, loss);
  s.record("residual_block/first.weight", a.w, {gfa.weight.begin(), gfa.weight.end()}, loss);
  s.record("residual_block/first.gain", a.g, {gfa.gain.begin(), gfa.gain.end()}, loss);
  s.record("residual_block/second.weight", b.w, {gfb.weight.begin(), gfb.weight.end()}, loss);
  s.record("residual_block/second.shift", b.t, {gfb.shift.begin(), gfb.shift.end()}, loss);
}

void check_mlp(Suite& s) {
  nn::Mlp net = nn::Mlp::initialized({6, 4, 8, 2, 0.3}, 5);
  for (const auto& slot : net.layout()) {
    if (slot.name.ends_with(".gain") || slot.name.ends_with(".shift") || slot.name.ends_with(".bias")) {
      auto t = net.mutable_tensor(slot.name);
      const auto noise = s.normal(t.size(), 0.2, slot.name.ends_with(".gain") ? 1.0 : 0.0);
      std::copy(noise.begin(), noise.end(), t.begin());
    }
  }
  Matrix x = s.matrix(3, 6);
  const Matrix r = s.matrix(3, 4);
  nn::Mlp::Cache cache;
  net.forward(x, nn::Mode::Train, 21, &cache);
  const auto g = net.backward(cache, r);
  std::function<Probe()> loss = [&] {
    nn::Mlp::Cache c;
    const double v = weighted_sum(r, net.forward(x, nn::Mode::Train, 21, &c));
    return Probe{v, nn::activation_signature(c)};
  };
  s.record("mlp/input", x.data, g.input.data, loss);
  s.record("mlp/params", net.mutable_params(), g.params, loss);
}

std::vector<double> flatten(const std::vector<Pose3D>& poses) {
  std::vector<double> v;
  for (const auto& p : poses)
    for (const auto& q : p) v.insert(v.end(), {q.x, q.y, q.z});
  return v;
}

void unflatten(std::span<const double> v, std::vector<Pose3D>& poses) {
  std::size_t k = 0;
  for (auto& p : poses)
    for (auto& q : p) q = {v[k], v[k + 1], v[k + 2]}, k += 3;
}

void check_losses(Suite& s) {
  // Geman-McClure over six decades of residual, three scales.
  for (double alpha : {1.0, 100.0, 2500.0}) {
    std::vector<double> xs, gs;
    for (double e = -3.0; e <= 3.0; e += 0.25)
      for (double sign : {-1.0, 1.0}) xs.push_back(sign * std::sqrt(alpha) * std::pow(10.0, e));
    for (double x : xs) gs.push_back(gm_grad(x, alpha));
    std::vector<double> theta = xs;
    // Unperturbed entries cancel exactly, so only the perturbed term is
    // differenced.
    s.record("gm_loss/alpha=" + std::to_string(static_cast<int>(alpha)), theta, gs, [&] {
      double v = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) v += gm_loss(theta[i], alpha) - gm_loss(xs[i], alpha);
      return v;
    });
  }

  const std::size_t J = 17;
  std::vector<Pose3D> gt(3, Pose3D(J)), pred(3, Pose3D(J));
  for (std::size_t p = 0; p < gt.size(); ++p)
    for (std::size_t j = 0; j < J; ++j) {
      const auto g = s.normal(3, 300.0);
      auto d = s.normal(3, 40.0);
      for (double& v : d) v += v >= 0.0 ? 1.0 : -1.0;
      gt[p][j] = {g[0], g[1], 4000.0 + g[2]};
      pred[p][j] = gt[p][j] + Point3D{d[0], d[1], d[2]};
    }
  {
    std::vector<double> theta = flatten(pred);
    const auto analytic = flatten(l1_pose_loss(pred, gt).grad);
    s.record("l1_pose_loss/pred", theta, analytic, [&] {
      std::vector<Pose3D> p = pred;
      unflatten(theta, p);
      return l1_pose_loss(p, gt).value;
    });
  }

  std::vector<WeakDepthTerm> weak(4);
  for (auto& w : weak) {
    w.predicted_mm = s.normal(14, 200.0, 4000.0);
    w.target.mm = w.predicted_mm;
    // Residuals of 1 to 30 mm straddle sqrt(alpha); the far tail, where the
    // derivative vanishes, is covered by the gm_loss checks.
    std::uniform_real_distribution<double> mag(1.0, 30.0);
    for (double& t : w.target.mm) t += (s.rng() & 1 ? 1.0 : -1.0) * mag(s.rng);
    w.target.mm[3] = std::numeric_limits<double>::quiet_NaN();
  }
  const RobustLossConfig cfg{100.0, 0.7};
  const TotalLoss total = total_loss(pred, gt, weak, cfg);
  std::vector<double> theta = flatten(pred);
  for (const auto& w : weak) theta.insert(theta.end(), w.predicted_mm.begin(), w.predicted_mm.end());
  std::vector<double> analytic = flatten(total.pose_grad);
  for (const auto& g : total.depth_grad) analytic.insert(analytic.end(), g.begin(), g.end());
  s.record("total_loss/pred+depth", theta, analytic, [&] {
    std::vector<Pose3D> p = pred;
    unflatten(theta, p);
    std::vector<WeakDepthTerm> w = weak;
    std::size_t k = 3 * J * p.size();
    for (auto& t : w)
      for (double& d : t.predicted_mm) d = theta[k++];
    return total_loss(p, gt, w, cfg).value;
  });
}

PersonSample random_sample(Suite& s, const SkeletonSpec& spec, bool annotated, std::size_t hole) {
  const std::size_t J = spec.joint_count();
  PersonSample p;
  p.camera = {200.0, 205.0, 160.0, 120.0};
  std::uniform_real_distribution<double> u(20.0, 300.0), v(20.0, 220.0), z(2000.0, 7000.0);
  for (std::size_t j = 0; j < J; ++j) {
    p.view.joints_2d.push_back({u(s.rng), v(s.rng)});
    p.view.depth_features.mm.push_back(z(s.rng));
    p.view.depth_targets.mm.push_back(z(s.rng));
  }
  p.view.depth_features.mm[hole % J] = std::numeric_limits<double>::quiet_NaN();
  p.view.depth_targets.mm[(hole + 5) % J] = std::numeric_limits<double>::quiet_NaN();
  if (annotated) {
    const double root_z = z(s.rng);
    for (std::size_t j = 0; j < J; ++j) {
      const auto g = s.normal(3, 300.0);
      p.view.joints_3d.push_back({g[0], g[1], root_z + g[2]});
    }
  }
  return p;
}

void check_end_to_end(Suite& s) {
  const SkeletonSpec spec = SkeletonSpec::mupots17();
  std::vector<PersonSample> ann, weak;
  for (int i = 0; i < 4; ++i) ann.push_back(random_sample(s, spec, true, i));
  for (int i = 0; i < 3; ++i) weak.push_back(random_sample(s, spec, false, i));

  TrainConfig cfg;
  cfg.hidden_width = 16;
  cfg.depth_hidden_width = 12;
  cfg.dropout = 0.2;
  cfg.seed = 3;
  ModelBundle bundle = make_bundle(spec, fit_standardizer(ann, spec, weak), cfg);
  // sqrt(alpha) = 1 m, comparable to the depth spread, keeps the objective
  // smooth at the scale of h in parameter space; gm_loss itself is checked
  // at sharper scales above. The large lambda lifts the depth-network
  // gradients well above the round-off of the pose term in mixed batches.
  const RobustLossConfig loss{1e6, 50.0};

  struct Case {
    const char* name;
    std::span<const PersonSample> a, w;
  };
  const std::vector<Case> cases = {
      {"end_to_end/mixed", ann, weak},
      {"end_to_end/weak_only", {}, weak},
      {"end_to_end/annotated_only", ann, {}},
  };
  for (const auto& c : cases) {
    const Batch batch = make_batch(bundle, c.a, c.w);
    const std::uint64_t seed = 17;
    const BatchResult r = evaluate_batch(bundle, batch, loss, nn::Mode::Train, seed);
    std::function<Probe()> value = [&] {
      Probe p;
      p.value = evaluate_batch(bundle, batch, loss, nn::Mode::Train, seed, false, &p.region).value;
      return p;
    };
    s.record(std::string(c.name) + "/posenet", bundle.posenet.mutable_params(), r.posenet_grad, value);
    if (!c.w.empty()) s.record(std::string(c.name) + "/jdn", bundle.jdn.mutable_params(), r.jdn_grad, value);
    if (c.a.empty()) {
      Batch b = batch;
      s.record(std::string(c.name) + "/input", b.weak_input.data, r.weak_input_grad.data,
               std::function<Probe()>([&] {
                 Probe p;
                 p.value = evaluate_batch(bundle, b, loss, nn::Mode::Train, seed, false, &p.region).value;
                 return p;
               }));
    }
  }
}

}  // namespace

Report run_suite(std::uint64_t seed, const Options& options) {
  const auto start = std::chrono::steady_clock::now();
  Suite s{make_rng(seed, 0), options, {}};
  check_linear(s);
  check_layer_norm(s);
  check_relu_dropout(s);
  check_dense_and_block(s);
  check_mlp(s);
  check_losses(s);
  check_end_to_end(s);
  Report& r = s.report;
  r.passed = true;
  for (const auto& c : r.checks) {
    r.max_rel_error = std::max(r.max_rel_error, c.max_rel_error);
    r.passed = r.passed && c.passed;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

nlohmann::json to_json(const Report& r) {
  auto checks = nlohmann::json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"entries", c.entries},
                      {"skipped", c.skipped},
                      {"max_rel_error", c.max_rel_error},
                      {"passed", c.passed}});
  return {{"passed", r.passed}, {"max_rel_error", r.max_rel_error}, {"seconds", r.seconds}, {"checks", checks}};
}

}  // namespace wdpose::gradcheck
