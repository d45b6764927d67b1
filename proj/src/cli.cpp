#include "pyraflow/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "pyraflow/colorize.hpp"
#include "pyraflow/flowio.hpp"
#include "pyraflow/image_io.hpp"
#include "pyraflow/metrics.hpp"
#include "pyraflow/selfcheck.hpp"
#include "pyraflow/synthetic.hpp"

namespace pyraflow {

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kIoFailure = 1;
constexpr int kValidationFailure = 2;
constexpr int kSelfCheckFailure = 3;

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Applies a config file to both the model config and (optionally) the
/// training hyperparameters; rejects keys neither accepts.
void load_config(const std::string& path, ModelConfig& cfg, TrainHyper* hyper) {
  for (const auto& [k, v] : parse_kv(read_text_file(path))) {
    if (cfg.apply(k, v)) continue;
    if (hyper && hyper->apply(k, v)) continue;
    throw ConfigError("unknown configuration key '" + k + "'");
  }
}

/// Replicates the right/bottom edges until both extents are multiples of 32.
Tensor pad_to_32(const Tensor& img) {
  const int h = img.height(), w = img.width();
  const int ph = (h + 31) / 32 * 32, pw = (w + 31) / 32 * 32;
  if (ph == h && pw == w) return img;
  Tensor out(Shape{img.channels(), ph, pw});
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x)
        out.at(c, y, x) = img.at(c, std::min(y, h - 1), std::min(x, w - 1));
  return out;
}

Tensor crop_flow(const Tensor& flow, int h, int w) {
  if (flow.height() == h && flow.width() == w) return flow;
  Tensor out(Shape{2, h, w});
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = flow.at(c, y, x);
  return out;
}

struct CommonOpts {
  std::string config_path;
  double width_scale = -1;
  int64_t seed = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key=value configuration file");
    cmd->add_option("--width-scale", width_scale, "channel width multiplier");
    cmd->add_option("--seed", seed, "RNG seed override");
  }

  void fill(ModelConfig& cfg, TrainHyper* hyper) const {
    if (!config_path.empty()) load_config(config_path, cfg, hyper);
    if (width_scale > 0) cfg.width_scale = static_cast<float>(width_scale);
    if (seed >= 0) {
      cfg.seed = static_cast<uint64_t>(seed);
      if (hyper) hyper->seed = static_cast<uint64_t>(seed);
    }
  }
};

int cmd_estimate(const std::string& img1_path, const std::string& img2_path,
                 const std::string& weights_path, const std::string& out_path,
                 const std::string& viz_path, bool pad, const CommonOpts& common,
                 std::ostream& out) {
  ModelConfig cfg;
  common.fill(cfg, nullptr);

  Tensor im1 = read_image(img1_path);
  Tensor im2 = read_image(img2_path);
  if (!im1.same_shape(im2))
    throw ShapeError("estimate: image extents differ: " + shape_str(im1.shape()) + " vs " +
                     shape_str(im2.shape()));
  const int orig_h = im1.height(), orig_w = im1.width();
  if (pad) {
    im1 = pad_to_32(im1);
    im2 = pad_to_32(im2);
  }

  ModelWeights weights = read_weights(weights_path);
  validate_weights(weights, cfg);

  const auto t0 = std::chrono::steady_clock::now();
  ForwardResult result = forward(im1, im2, weights, cfg);
  const auto t1 = std::chrono::steady_clock::now();

  Tensor flow = crop_flow(result.flow, orig_h, orig_w);
  write_flo(out_path, flow);
  if (!viz_path.empty()) write_image_png(viz_path, colorize(flow));

  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  out << "flow " << orig_w << "x" << orig_h << " written to " << out_path << " ("
      << std::fixed << std::setprecision(1) << ms << " ms)\n";
  return kOk;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path,
             const std::string& mask_path, bool as_json, std::ostream& out) {
  Tensor est = read_flo(est_path);
  Tensor gt = read_flo(gt_path);
  ValidMask mask;
  if (!mask_path.empty()) {
    Tensor m = read_image(mask_path);
    Tensor valid(Shape{1, m.height(), m.width()});
    for (int64_t i = 0; i < valid.size(); ++i)
      valid.data()[i] = m.data()[i] > 0.5f ? 1.0f : 0.0f;
    mask = valid;
  }
  const float e = aee(est, gt, mask);
  const float fl = fl_all(est, gt, mask);
  if (as_json) {
    json j{{"aee", e}, {"fl_all", fl}};
    out << j.dump() << "\n";
  } else {
    out << "AEE " << std::fixed << std::setprecision(3) << e << ", Fl-all "
        << std::setprecision(2) << fl << "%\n";
  }
  return kOk;
}

int cmd_train_toy(const std::string& out_weights, const std::string& curve_path,
                  const CommonOpts& common, std::ostream& out, std::ostream& err) {
  ModelConfig cfg;
  TrainHyper hyper;
  common.fill(cfg, &hyper);

  SyntheticSpec data_spec;
  data_spec.count = hyper.dataset_size;
  data_spec.size = hyper.image_size;
  data_spec.max_displacement = hyper.max_displacement;
  data_spec.seed = hyper.seed;
  data_spec.piecewise = hyper.piecewise;
  err << "generating " << data_spec.count << " training samples (" << data_spec.size << "x"
      << data_spec.size << ", |t| <= " << hyper.max_displacement << ")\n";
  const std::vector<TrainSample> data = make_synthetic_dataset(data_spec);

  TrainResult result = train_toy(data, cfg, hyper);

  if (!curve_path.empty()) {
    std::ofstream csv(curve_path);
    if (!csv) throw IoError("cannot open '" + curve_path + "' for writing");
    csv << "iter,stage,lr,loss\n";
    for (const TrainRecord& r : result.curve)
      csv << r.iter << "," << r.stage << "," << format_float(r.lr) << ","
          << format_float(r.loss) << "\n";
  }
  if (!out_weights.empty()) write_weights(out_weights, result.weights);

  SyntheticSpec holdout_spec = data_spec;
  holdout_spec.count = hyper.holdout_size;
  holdout_spec.seed = hyper.seed + 0x9e77;
  const std::vector<TrainSample> holdout = make_synthetic_dataset(holdout_spec);
  double total = 0;
  for (const TrainSample& s : holdout) {
    ForwardResult fwd = forward(s.im1, s.im2, result.weights, cfg);
    total += aee(fwd.flow, s.gt);
  }
  const double held_aee = total / static_cast<double>(holdout.size());
  out << "final loss " << format_float(result.curve.back().loss) << " after "
      << result.curve.size() << " iterations\n";
  out << "held-out AEE " << format_double(held_aee) << " over " << holdout.size()
      << " samples\n";
  return kOk;
}

int cmd_selfcheck(bool as_json, bool use_double, int seeds, const std::string& only,
                  const std::string& sabotage, std::ostream& out) {
  CheckOptions opt;
  opt.use_double = use_double;
  opt.seeds = seeds;
  opt.only = only;
  opt.sabotage = sabotage;
  const std::vector<CheckResult> results = run_all_checks(opt);

  int failures = 0;
  if (as_json) {
    json arr = json::array();
    for (const CheckResult& r : results) {
      arr.push_back(json{{"name", r.name},
                         {"pass", r.pass},
                         {"value", r.value},
                         {"limit", r.limit},
                         {"detail", r.detail}});
      failures += r.pass ? 0 : 1;
    }
    out << arr.dump(2) << "\n";
  } else {
    for (const CheckResult& r : results) {
      out << (r.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(34) << r.name
          << std::scientific << std::setprecision(3) << r.value << " (limit " << r.limit
          << ")\n";
      failures += r.pass ? 0 : 1;
    }
    out << results.size() - static_cast<size_t>(failures) << "/" << results.size()
        << " checks passed\n";
  }
  return failures == 0 ? kOk : kSelfCheckFailure;
}

int cmd_params(const CommonOpts& common, std::ostream& out) {
  ModelConfig cfg;
  common.fill(cfg, nullptr);
  std::mt19937_64 rng(cfg.seed);
  ModelWeights w = init_weights(cfg, rng);
  const ParameterBreakdown b = parameter_breakdown(w);
  out << "encoder        " << b.encoder << "\n";
  out << "matching       " << b.matching << "\n";
  out << "refinement     " << b.refinement << "\n";
  out << "regularization " << b.regularization << "\n";
  out << "total          " << b.total << " (" << std::fixed << std::setprecision(2)
      << static_cast<double>(b.total) / 1e6 << "M)\n";
  return kOk;
}

} // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"pyramidal optical-flow engine"};
  app.require_subcommand(1);

  // estimate
  auto* estimate = app.add_subcommand("estimate", "estimate flow for an image pair");
  std::string img1, img2, weights_path, out_flo, viz_path;
  bool pad = false;
  estimate->add_option("image1", img1, "first image (PNG or PPM)")->required();
  estimate->add_option("image2", img2, "second image")->required();
  estimate->add_option("--weights", weights_path, "weight file")->required();
  estimate->add_option("--out", out_flo, "output .flo path")->required();
  estimate->add_option("--viz", viz_path, "also write a colorized PNG");
  estimate->add_flag("--pad", pad, "pad inputs to a multiple of 32 and crop the flow back");
  CommonOpts est_common;
  est_common.attach(estimate);

  // eval
  auto* eval = app.add_subcommand("eval", "AEE / Fl-all between two .flo files");
  std::string est_flo, gt_flo, mask_path;
  bool eval_json = false;
  eval->add_option("estimate", est_flo, "estimated .flo")->required();
  eval->add_option("truth", gt_flo, "ground-truth .flo")->required();
  eval->add_option("--mask", mask_path, "validity mask image (nonzero = valid)");
  eval->add_flag("--json", eval_json, "machine-readable output");

  // train-toy
  auto* train = app.add_subcommand("train-toy", "desk-scale stage-wise training on synthetic data");
  std::string train_weights = "toy.lfnw", curve_path;
  train->add_option("--out", train_weights, "output weight file");
  train->add_option("--curve", curve_path, "loss-curve CSV path");
  CommonOpts train_common;
  train_common.attach(train);

  // selfcheck
  auto* selfcheck = app.add_subcommand("selfcheck", "gradient/oracle/invariant suites");
  bool sc_json = false, sc_double = false;
  int sc_seeds = 5;
  std::string sc_only, sc_sabotage;
  selfcheck->add_flag("--json", sc_json, "one JSON record per check");
  selfcheck->add_flag("--double", sc_double, "64-bit gradient verification mode");
  selfcheck->add_option("--seeds", sc_seeds, "random seeds per gradient check");
  selfcheck->add_option("--only", sc_only, "run only checks with this name prefix");
  selfcheck
      ->add_option("--inject-bad-backward", sc_sabotage,
                   "test hook: corrupt the analytic gradient of the named check")
      ->group(""); // hidden

  // params
  auto* params = app.add_subcommand("params", "parameter counts per module");
  CommonOpts params_common;
  params_common.attach(params);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kOk : kValidationFailure;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidationFailure;
  }

  try {
    if (estimate->parsed())
      return cmd_estimate(img1, img2, weights_path, out_flo, viz_path, pad, est_common, out);
    if (eval->parsed()) return cmd_eval(est_flo, gt_flo, mask_path, eval_json, out);
    if (train->parsed()) return cmd_train_toy(train_weights, curve_path, train_common, out, err);
    if (selfcheck->parsed())
      return cmd_selfcheck(sc_json, sc_double, sc_seeds, sc_only, sc_sabotage, out);
    if (params->parsed()) return cmd_params(params_common, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kValidationFailure;
}

} // namespace pyraflow
