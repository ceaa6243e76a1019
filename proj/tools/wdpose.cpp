// wdpose command-line interface: generate, train, predict, eval, gradcheck.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wdpose/error.hpp"
#include "wdpose/gradcheck.hpp"
#include "wdpose/io.hpp"
#include "wdpose/metrics.hpp"
#include "wdpose/pipeline.hpp"
#include "wdpose/synth.hpp"

namespace fs = std::filesystem;
using namespace wdpose;

namespace {

struct TrainOverrides {
  std::optional<int> epochs, lr_decay_every;
  std::optional<std::size_t> batch_size, hidden_width, depth_hidden_width, residual_blocks;
  std::optional<double> lambda, alpha, learning_rate, lr_decay, zoom_min, zoom_max, dropout;
  std::optional<std::uint64_t> seed;
  std::optional<bool> stop_gradient;

  void add_to(CLI::App& app) {
    app.add_option("--epochs", epochs, "Training epochs");
    app.add_option("--batch-size", batch_size, "Mini-batch size (even)");
    app.add_option("--lambda", lambda, "Weight of the weak depth term");
    app.add_option("--alpha", alpha, "Geman-McClure scale, mm^2");
    app.add_option("--learning-rate", learning_rate, "Base Adam learning rate");
    app.add_option("--lr-decay", lr_decay, "Learning-rate decay factor");
    app.add_option("--lr-decay-every", lr_decay_every, "Epochs between decays");
    app.add_option("--zoom-min", zoom_min, "Smallest zoom factor");
    app.add_option("--zoom-max", zoom_max, "Largest zoom factor");
    app.add_option("--seed", seed, "Training seed");
    app.add_option("--hidden-width", hidden_width, "PoseNet hidden width");
    app.add_option("--depth-hidden-width", depth_hidden_width, "JointDepthNet hidden width");
    app.add_option("--residual-blocks", residual_blocks, "Residual blocks per network");
    app.add_option("--dropout", dropout, "Dropout rate");
    app.add_option("--stop-gradient", stop_gradient, "Keep the weak gradient out of PoseNet (true/false)");
  }

  void apply(TrainConfig& c) const {
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (lambda) c.lambda = *lambda;
    if (alpha) c.alpha = *alpha;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (lr_decay) c.lr_decay = *lr_decay;
    if (lr_decay_every) c.lr_decay_every = *lr_decay_every;
    if (zoom_min) c.zoom_min = *zoom_min;
    if (zoom_max) c.zoom_max = *zoom_max;
    if (seed) c.seed = *seed;
    if (hidden_width) c.hidden_width = *hidden_width;
    if (depth_hidden_width) c.depth_hidden_width = *depth_hidden_width;
    if (residual_blocks) c.residual_blocks = *residual_blocks;
    if (dropout) c.dropout = *dropout;
    if (stop_gradient) c.stop_gradient = *stop_gradient;
  }
};

int run_generate(const std::string& config_path, const fs::path& out, std::uint64_t seed) {
  const io::GenerateConfig cfg =
      config_path.empty() ? io::GenerateConfig{} : io::generate_config_from_json(io::read_json_file(config_path));
  const SkeletonSpec spec = SkeletonSpec::mupots17();
  const auto data = synth::generate_dataset(seed, cfg.scene, spec, cfg.counts);
  io::write_dataset(out, data, spec);
  nlohmann::json used = io::to_json(cfg);
  used["seed"] = seed;
  io::write_json_file(out / "generate_config.json", used);
  std::cout << "wrote " << data.data.annotated.size() << " annotated, " << data.data.weak.size() << " weak and "
            << data.data.test.size() << " test samples to " << out.string() << '\n';
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir, const fs::path& out,
              const std::string& log_path, const TrainOverrides& overrides) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : train_config_from_json(io::read_json_file(config_path));
  overrides.apply(cfg);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (cfg.data_dir.empty()) throw UsageError("no dataset directory given (--data)");
  cfg.validate();

  SkeletonSpec spec;
  const Dataset data = io::load_dataset(cfg.data_dir, &spec);
  std::vector<nlohmann::json> log;
  const TrainResult result = train(cfg, data, spec, [&](const EpochLog& e, const ModelBundle&) {
    log.push_back(to_json(e));
    std::cout << log.back().dump() << '\n';
  });
  save_bundle(result.bundle, out.string());
  if (!log_path.empty()) io::write_jsonl(log_path, log);
  return 0;
}

int run_predict(const fs::path& model, const fs::path& data_dir, const fs::path& out, const std::string& split) {
  const ModelBundle bundle = load_bundle(model.string());
  std::vector<PersonSample> samples;
  for (const auto& s : io::read_samples(data_dir / "samples.jsonl"))
    if (split == "all" || to_string(s.split) == split) samples.push_back(s);
  const auto poses = predict(bundle, samples);
  std::vector<PersonSample> records;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    PersonSample r = samples[i];
    r.view.joints_3d = poses[i];
    r.view.depth_features = {};
    r.visible.clear();
    records.push_back(std::move(r));
  }
  io::write_samples(out, records);
  std::cout << "wrote " << records.size() << " predictions to " << out.string() << '\n';
  return 0;
}

int run_eval(const fs::path& gt_path, const fs::path& pred_path, const fs::path& out, const EvalOptions& opt,
             const std::string& skeleton_path) {
  const SkeletonSpec spec =
      skeleton_path.empty() ? SkeletonSpec::mupots17() : skeleton_from_json(io::read_json_file(skeleton_path));
  const auto gt = io::read_frame_poses(gt_path);
  const auto pred = io::read_frame_poses(pred_path);
  const MetricReport report = evaluate(gt, pred, spec, opt);
  if (!out.empty()) io::write_json_file(out, to_json(report));
  std::cout << format_table(report);
  return 0;
}

int run_gradcheck(std::uint64_t seed, const std::string& out) {
  const auto report = gradcheck::run_suite(seed);
  for (const auto& c : report.checks)
    std::cout << (c.passed ? "ok   " : "FAIL ") << c.name << "  entries=" << c.entries
              << "  skipped=" << c.skipped << "  max_rel_error=" << c.max_rel_error << '\n';
  std::cout << (report.passed ? "PASS" : "FAIL") << "  max_rel_error=" << report.max_rel_error
            << "  seconds=" << report.seconds << '\n';
  if (!out.empty()) io::write_json_file(out, to_json(report));
  return report.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Absolute 3D pose lifting with weak depth supervision"};
  app.require_subcommand(1);

  std::string config, out, data, model, gt, pred, log, split = "test", skeleton;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("generate", "Write a synthetic RGB-D dataset");
  gen->add_option("--config", config, "Generation config (JSON)");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Dataset seed");

  TrainOverrides overrides;
  auto* tr = app.add_subcommand("train", "Train PoseNet and JointDepthNet");
  tr->add_option("--config", config, "Training config (JSON)");
  tr->add_option("--data", data, "Dataset directory");
  tr->add_option("--out", out, "Model file")->required();
  tr->add_option("--log", log, "Per-epoch log (JSON lines)");
  overrides.add_to(*tr);

  auto* pr = app.add_subcommand("predict", "Predict absolute poses");
  pr->add_option("--model", model, "Model file")->required();
  pr->add_option("--data", data, "Dataset directory")->required();
  pr->add_option("--out", out, "Prediction file (JSON lines)")->required();
  pr->add_option("--split", split, "Samples to predict")->check(CLI::IsMember({"ann", "weak", "test", "all"}));

  EvalOptions eval_opt;
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  ev->add_option("--gt", gt, "Ground-truth pose file")->required();
  ev->add_option("--pred", pred, "Predicted pose file")->required();
  ev->add_option("--out", out, "Report file (JSON)");
  ev->add_flag("--detected-only", eval_opt.detected_only, "Score matched poses only");
  ev->add_flag("--normalized-skeletons", eval_opt.normalized_skeletons, "Height-normalize skeletons first");
  ev->add_option("--match-threshold", eval_opt.match_threshold, "Root matching distance, mm");
  ev->add_option("--skeleton", skeleton, "Skeleton file (JSON)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--seed", seed, "Suite seed");
  gc->add_option("--out", out, "Report file (JSON)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_generate(config, out, seed);
    if (*tr) return run_train(config, data, out, log, overrides);
    if (*pr) return run_predict(model, data, out, split);
    if (*ev) return run_eval(gt, pred, out, eval_opt, skeleton);
    if (*gc) return run_gradcheck(seed, out);
  } catch (const wdpose::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
