// Acceptance suite: eight criteria, one pass/fail line each. Run with no
// arguments for the full sweep or with a criterion number (1..8).

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "pyraflow/colorize.hpp"
#include "pyraflow/flowio.hpp"
#include "pyraflow/image_io.hpp"
#include "pyraflow/metrics.hpp"
#include "pyraflow/selfcheck.hpp"
#include "pyraflow/synthetic.hpp"

using namespace pyraflow;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }
  void note(const std::string& what) {
    detail << (detail.str().empty() ? "" : "; ") << what;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Shape traced(const ShapeTrace& trace, const std::string& name) {
  for (const auto& [n, s] : trace)
    if (n == name) return s;
  return {};
}

// Criterion 1: level-5 unit shapes match the published layer tables.
Criterion criterion1() {
  Criterion c;
  const auto t0 = std::chrono::steady_clock::now();

  ModelConfig cfg; // width_scale 1: the real channel counts
  std::mt19937_64 rng(cfg.seed);
  ModelWeights w = init_weights(cfg, rng);

  std::mt19937_64 img_rng(11);
  Tensor im1(Shape{3, 64, 64}), im2(Shape{3, 64, 64});
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (int64_t i = 0; i < im1.size(); ++i) im1.data()[i] = dist(img_rng);
  for (int64_t i = 0; i < im2.size(); ++i) im2.data()[i] = dist(img_rng);

  ShapeTrace trace;
  forward(im1, im2, w, cfg, CascadePlan::full(), nullptr, &trace);

  // Encoder schedule for a 64x64 input.
  c.require(traced(trace, "conv1") == Shape{32, 64, 64}, "conv1 32x64x64");
  c.require(traced(trace, "conv2_3") == Shape{32, 32, 32}, "conv2_3 32x32x32");
  c.require(traced(trace, "conv3_2") == Shape{64, 16, 16}, "conv3_2 64x16x16");
  c.require(traced(trace, "conv4_2") == Shape{96, 8, 8}, "conv4_2 96x8x8");
  c.require(traced(trace, "conv5") == Shape{128, 4, 4}, "conv5 128x4x4");
  c.require(traced(trace, "conv6") == Shape{192, 2, 2}, "conv6 192x2x2");

  // Matching unit at level 5: 49-channel volume filtered 128/64/32/2.
  c.require(traced(trace, "corr5_M") == Shape{49, 4, 4}, "corr5_M has 49 channels");
  c.require(traced(trace, "conv5_1_M") == Shape{128, 4, 4}, "conv5_1_M 128");
  c.require(traced(trace, "conv5_2_M") == Shape{64, 4, 4}, "conv5_2_M 64");
  c.require(traced(trace, "conv5_3_M") == Shape{32, 4, 4}, "conv5_3_M 32");
  c.require(traced(trace, "conv5_4_M") == Shape{2, 4, 4}, "conv5_4_M 2");

  // Refinement unit at level 5: 128+128+2 = 258 stacked input channels.
  c.require(traced(trace, "conv5_1_S.in") == Shape{258, 4, 4}, "S-unit input 258");
  c.require(traced(trace, "conv5_1_S") == Shape{128, 4, 4}, "conv5_1_S 128");

  // Regularization unit at level 5: 128+2+1 = 131 in, distance output 9.
  c.require(traced(trace, "conv5_1_R.in") == Shape{131, 4, 4}, "R-unit input 131");
  c.require(traced(trace, "conv5_dist_R") == Shape{9, 4, 4}, "distance output 9");
  c.require(traced(trace, "softmax5_R") == Shape{9, 4, 4}, "filter bank 9");
  c.require(traced(trace, "norm5_R") == Shape{1, 4, 4}, "occlusion map 1 channel");

  const double secs = seconds_since(t0);
  c.require(secs < 5.0, "runtime under 5 s");
  c.detail << (c.detail.str().empty() ? "" : "; ") << "level-5 shapes match the layer tables, "
           << secs << " s";
  return c;
}

// Criterion 2: parameter count in the published band; encoder closed form.
Criterion criterion2() {
  Criterion c;
  ModelConfig cfg;
  std::mt19937_64 rng(cfg.seed);
  ModelWeights w = init_weights(cfg, rng);
  const ParameterBreakdown b = parameter_breakdown(w);

  c.require(static_cast<double>(b.total) >= 5.37e6 * 0.85 &&
                static_cast<double>(b.total) <= 5.37e6 * 1.15,
            "total within 5.37M +- 15%");

  auto layer = [](int64_t out, int64_t in, int64_t k) { return out * in * k * k + out; };
  const int64_t closed_form = layer(32, 3, 7) + 3 * layer(32, 32, 3) + layer(64, 32, 3) +
                              layer(64, 64, 3) + layer(96, 64, 3) + layer(96, 96, 3) +
                              layer(128, 96, 3) + layer(192, 128, 3);
  c.require(b.encoder == closed_form, "encoder equals the hand-computed layer sum");
  c.detail << "total " << b.total << " (5.37M band [4564500, 6175500]), encoder " << b.encoder
           << " == " << closed_form;
  return c;
}

// Criterion 3: the finite-difference gradient suite at both precisions.
Criterion criterion3() {
  Criterion c;
  const auto t0 = std::chrono::steady_clock::now();
  CheckOptions opt;
  opt.seeds = 5;
  int n = 0;
  for (const CheckResult& r : run_gradient_checks(opt)) {
    c.require(r.pass, r.name + " (32-bit) err " + std::to_string(r.value));
    ++n;
  }
  opt.use_double = true;
  for (const CheckResult& r : run_gradient_checks(opt)) {
    c.require(r.pass, r.name + " (64-bit) err " + std::to_string(r.value));
    ++n;
  }
  const double secs = seconds_since(t0);
  c.require(secs < 120.0, "runtime under 2 min");
  c.detail << n << " gradient checks (5 seeds each, 32-bit @1e-2 and 64-bit @1e-4), " << secs
           << " s";
  return c;
}

// Criterion 4: implementation-vs-oracle equivalences.
Criterion criterion4() {
  Criterion c;
  const auto t0 = std::chrono::steady_clock::now();
  int n = 0;
  for (const CheckResult& r : run_oracle_checks({})) {
    c.require(r.pass, r.name + " dev " + std::to_string(r.value));
    ++n;
  }
  const double secs = seconds_since(t0);
  c.require(secs < 60.0, "runtime under 1 min");
  c.detail << n << " oracle equivalences (sparse-vs-dense volume, fold/pack local conv, "
           << "filter formula, conv/correlation loops, adjoints), " << secs << " s";
  return c;
}

// Criterion 5: analytic invariants.
Criterion criterion5() {
  Criterion c;
  int n = 0;
  for (const CheckResult& r : run_invariant_checks({})) {
    c.require(r.pass, r.name + " dev " + std::to_string(r.value));
    ++n;
  }
  c.detail << n << " invariants (warp identity/integer shift, filter normalization, "
           << "local-conv convexity, linearity, purity)";
  return c;
}

// Criterion 6: desk-scale stage-wise training run.
Criterion criterion6() {
  Criterion c;
  ModelConfig cfg;
  cfg.width_scale = 0.5f;
  cfg.seed = 0x1f0355;
  TrainHyper hyper; // defaults define the schedule; every stage <= 2000 iters
  hyper.seed = 7;
  for (int it : hyper.stage_iters) c.require(it <= 2000, "stage iterations within 2000");

  SyntheticSpec spec;
  spec.count = 200;
  spec.size = 64;
  spec.max_displacement = 4.0f;
  spec.seed = hyper.seed;
  const std::vector<TrainSample> data = make_synthetic_dataset(spec);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train_toy(data, cfg, hyper);
  const double train_secs = seconds_since(t0);

  SyntheticSpec holdout_spec = spec;
  holdout_spec.count = 20;
  holdout_spec.seed = spec.seed + 0x9e77;
  const std::vector<TrainSample> holdout = make_synthetic_dataset(holdout_spec);
  double total = 0;
  for (const TrainSample& s : holdout)
    total += aee(forward(s.im1, s.im2, result.weights, cfg).flow, s.gt);
  const double held_aee = total / static_cast<double>(holdout.size());

  c.require(held_aee < 1.0, "held-out AEE < 1.0 px (got " + std::to_string(held_aee) + ")");
  c.require(train_secs < 900.0, "single-thread runtime < 15 min");

  // Median flow on a fresh globally translated pair lands within 0.5 px.
  const TrainSample probe = make_translation_sample(64, 3.0f, -2.0f, 314);
  Tensor est = forward(probe.im1, probe.im2, result.weights, cfg).flow;
  std::vector<float> us(est.data(), est.data() + 64 * 64);
  std::vector<float> vs(est.data() + 64 * 64, est.data() + 2 * 64 * 64);
  std::nth_element(us.begin(), us.begin() + us.size() / 2, us.end());
  std::nth_element(vs.begin(), vs.begin() + vs.size() / 2, vs.end());
  const float med_u = us[us.size() / 2], med_v = vs[vs.size() / 2];
  c.require(std::abs(med_u - 3.0f) < 0.5f && std::abs(med_v + 2.0f) < 0.5f,
            "median flow within 0.5 px of (3,-2), got (" + std::to_string(med_u) + "," +
                std::to_string(med_v) + ")");

  // Determinism probe: a short prefix of the schedule must reproduce
  // bit-identical weights and curve under the same seed.
  TrainHyper tiny = hyper;
  tiny.stage_iters = {8, 6, 4, 3, 3, 3};
  TrainResult a = train_toy(data, cfg, tiny);
  TrainResult b = train_toy(data, cfg, tiny);
  bool identical = a.curve.size() == b.curve.size();
  for (size_t i = 0; identical && i < a.curve.size(); ++i)
    identical = a.curve[i].loss == b.curve[i].loss;
  for (const auto& name : a.weights.names()) {
    if (!identical) break;
    const Tensor& ta = a.weights.at(name);
    const Tensor& tb = b.weights.at(name);
    identical = std::memcmp(ta.data(), tb.data(),
                            sizeof(float) * static_cast<size_t>(ta.size())) == 0;
  }
  c.require(identical, "bit-identical rerun under the fixed seed");

  c.detail << "held-out AEE " << held_aee << " over 20 samples, " << result.curve.size()
           << " iterations in " << train_secs << " s, median flow (" << med_u << "," << med_v
           << ")";
  return c;
}

// Criterion 7: metric hand arithmetic.
Criterion criterion7() {
  Criterion c;
  Tensor gt(Shape{2, 4, 4});
  Tensor est(Shape{2, 4, 4});
  const int64_t plane = 16;
  for (int64_t i = 0; i < plane; ++i) {
    est.data()[i] = 3.0f;
    est.data()[plane + i] = 4.0f;
  }
  c.require(std::abs(aee(est, gt) - 5.0f) < 1e-6f, "uniform (3,4) error gives AEE 5.0");
  c.require(aee(gt, gt) == 0.0f, "AEE 0 at truth");

  Tensor gt100(Shape{2, 4, 4});
  Tensor est100(Shape{2, 4, 4});
  for (int64_t i = 0; i < plane; ++i) {
    gt100.data()[i] = 100.0f;
    est100.data()[i] = 104.0f;
  }
  c.require(fl_all(est100, gt100) == 0.0f,
            "4 px error on magnitude-100 truth is an inlier (< 5%)");

  Tensor gt10(Shape{2, 4, 4});
  Tensor est10(Shape{2, 4, 4});
  for (int64_t i = 0; i < plane; ++i) {
    gt10.data()[i] = 10.0f;
    est10.data()[i] = 14.0f;
  }
  c.require(fl_all(est10, gt10) == 100.0f, "4 px error on magnitude-10 truth is an outlier");
  c.detail << "AEE 3-4-5 arithmetic and the Fl-all inlier disjunction check out";
  return c;
}

// Criterion 8: file-format round trips and malformed-input rejection.
Criterion criterion8() {
  Criterion c;
  const fs::path dir = fs::temp_directory_path() / "pyraflow_acceptance";
  fs::create_directories(dir);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> dist(-30.0f, 30.0f);
  Tensor flow(Shape{2, 13, 17});
  for (int64_t i = 0; i < flow.size(); ++i) flow.data()[i] = dist(rng);
  const std::string flo = (dir / "rt.flo").string();
  write_flo(flo, flow);
  Tensor flow_back = read_flo(flo);
  c.require(flow_back.shape() == flow.shape() &&
                std::memcmp(flow_back.data(), flow.data(),
                            sizeof(float) * static_cast<size_t>(flow.size())) == 0,
            ".flo round trip bit-exact");

  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  std::mt19937_64 wrng(9);
  ModelWeights w = init_weights(cfg, wrng);
  const std::string lfnw = (dir / "rt.lfnw").string();
  write_weights(lfnw, w);
  ModelWeights w_back = read_weights(lfnw);
  bool weights_ok = w_back.names() == w.names();
  for (const auto& name : w.names()) {
    if (!weights_ok) break;
    weights_ok = std::memcmp(w_back.at(name).data(), w.at(name).data(),
                             sizeof(float) * static_cast<size_t>(w.at(name).size())) == 0;
  }
  c.require(weights_ok, "weight file round trip bit-exact");

  bool flo_rejected = false;
  try {
    std::ofstream f((dir / "bad.flo").string(), std::ios::binary);
    const float magic = 1.0f;
    f.write(reinterpret_cast<const char*>(&magic), 4);
    f.close();
    read_flo((dir / "bad.flo").string());
  } catch (const IoError&) {
    flo_rejected = true;
  }
  c.require(flo_rejected, "bad .flo magic rejected with a structured error");

  bool weights_rejected = false;
  try {
    std::ofstream f((dir / "bad.lfnw").string(), std::ios::binary);
    f.write("LFNW", 4);
    f.close();
    read_weights((dir / "bad.lfnw").string());
  } catch (const IoError&) {
    weights_rejected = true;
  }
  c.require(weights_rejected, "truncated weight file rejected with a structured error");

  std::error_code ec;
  fs::remove_all(dir, ec);
  c.detail << "round trips bit-exact, malformed files rejected";
  return c;
}

} // namespace

int main(int argc, char** argv) {
  const std::function<Criterion()> criteria[8] = {criterion1, criterion2, criterion3,
                                                  criterion4, criterion5, criterion6,
                                                  criterion7, criterion8};
  static const char* kTitles[8] = {
      "architecture conformance",   "parameter count",
      "gradient suite",             "oracle equivalences",
      "analytic invariants",        "toy training",
      "metrics",                    "format round trips"};

  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);
  int failures = 0;
  for (int i = 1; i <= 8; ++i) {
    if (only != 0 && i != only) continue;
    Criterion c = criteria[i - 1]();
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << "criterion " << i << " (" << kTitles[i - 1]
              << "): " << c.detail.str() << "\n";
    failures += c.pass ? 0 : 1;
  }
  return failures;
}
