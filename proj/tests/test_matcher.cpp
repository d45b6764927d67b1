#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pyraflow/matcher.hpp"
#include "pyraflow/selfcheck.hpp"
#include "pyraflow/warp.hpp"
#include "test_support.hpp"

using namespace pyraflow;
using namespace pyraflow::testing;

namespace {

/// Features with unit-norm descriptor at every position.
Tensor unit_norm_features(int c, int h, int w, std::mt19937_64& rng) {
  Tensor f = rand_tensor({c, h, w}, rng);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    double norm = 0;
    for (int ch = 0; ch < c; ++ch) norm += double(f.data()[ch * plane + i]) * f.data()[ch * plane + i];
    norm = std::sqrt(norm);
    for (int ch = 0; ch < c; ++ch) f.data()[ch * plane + i] /= static_cast<float>(norm);
  }
  return f;
}

ModelWeights matcher_weights(const ModelConfig& cfg, int level, uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelWeights w;
  for (const LayerDef& def : matcher_layers(cfg, level)) init_layer(w, def, rng);
  return w;
}

} // namespace

TEST_CASE("correlate: dot product over the descriptor length") {
  Tensor ones = Tensor::full({128}, 1.0f);
  CHECK(correlate(ones, ones) == doctest::Approx(1.0f));

  Tensor a(Shape{4}, {1.0f, 0.0f, 1.0f, 0.0f});
  Tensor b(Shape{4}, {0.0f, 1.0f, 0.0f, 1.0f});
  CHECK(correlate(a, b) == doctest::Approx(0.0f));

  std::mt19937_64 rng(1);
  Tensor x = rand_tensor({37}, rng);
  Tensor y = rand_tensor({37}, rng);
  double ref = 0;
  for (int i = 0; i < 37; ++i) ref += double(x.data()[i]) * y.data()[i];
  ref /= 37.0;
  CHECK(std::abs(correlate(x, y) - ref) < 1e-6);

  CHECK_THROWS_AS(correlate(x, ones), ShapeError);
}

TEST_CASE("cost volume has (2r+1)^2 channels at radius 3") {
  std::mt19937_64 rng(2);
  Tensor f1 = rand_tensor({8, 6, 6}, rng);
  Tensor f2 = rand_tensor({8, 6, 6}, rng);
  Tensor vol = cost_volume(f1, f2, MatchConfig{3, 1});
  CHECK(vol.shape() == Shape{49, 6, 6});
  // The radius-6/stride-2 configuration keeps the same 49-channel width.
  Tensor vol2 = cost_volume(f1, f2, MatchConfig{6, 2});
  CHECK(vol2.channels() == 49);
}

TEST_CASE("matched identical unit-norm features peak at zero displacement") {
  std::mt19937_64 rng(3);
  Tensor f = unit_norm_features(16, 7, 7, rng);
  Tensor vol = cost_volume(f, f, MatchConfig{3, 1});
  const int center = (49 - 1) / 2;
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) {
      const float peak = vol.at(center, y, x);
      CHECK(peak == doctest::Approx(1.0f / 16.0f));
      for (int d = 0; d < 49; ++d)
        if (d != center) CHECK(vol.at(d, y, x) <= peak + 1e-6f);
    }
}

TEST_CASE("sparse/dense cost-volume oracle and symmetry hold") {
  CheckOptions opt;
  opt.only = "oracle.costvol";
  for (const CheckResult& r : run_oracle_checks(opt)) {
    INFO(r.name);
    CHECK(r.pass);
  }
  CheckOptions sym;
  sym.only = "inv.costvol_symmetry";
  for (const CheckResult& r : run_invariant_checks(sym)) CHECK(r.pass);
}

TEST_CASE("matching unit at level 5 walks the documented shapes") {
  ModelConfig cfg;
  ModelWeights w = matcher_weights(cfg, 5, 4);
  std::mt19937_64 rng(5);
  Tensor f1 = rand_tensor({128, 4, 4}, rng);
  Tensor f2 = rand_tensor({128, 4, 4}, rng);
  Tensor prev = rand_tensor({2, 2, 2}, rng);

  ShapeTrace trace;
  MatchOutput out = matching_unit(f1, f2, &prev, w, cfg, 5, nullptr, &trace);
  CHECK(out.flow.shape() == Shape{2, 4, 4});

  auto shape_of = [&](const std::string& name) -> Shape {
    for (const auto& [n, s] : trace)
      if (n == name) return s;
    return {};
  };
  CHECK(shape_of("upconv5_M") == Shape{2, 4, 4});
  CHECK(shape_of("f-warp5_M") == Shape{128, 4, 4});
  CHECK(shape_of("corr5_M") == Shape{49, 4, 4});
  CHECK(shape_of("conv5_1_M") == Shape{128, 4, 4});
  CHECK(shape_of("conv5_2_M") == Shape{64, 4, 4});
  CHECK(shape_of("conv5_3_M") == Shape{32, 4, 4});
  CHECK(shape_of("conv5_4_M") == Shape{2, 4, 4});
  CHECK(shape_of("flow5_M") == Shape{2, 4, 4});
}

TEST_CASE("zeroed filtering stack passes the upsampled prior through unchanged") {
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  ModelWeights w = matcher_weights(cfg, 5, 6);
  for (const LayerDef& def : matcher_layers(cfg, 5)) {
    if (def.transposed) continue;
    Tensor& wt = w.at(def.name + ".weight");
    std::fill(wt.data(), wt.data() + wt.size(), 0.0f);
    Tensor& bt = w.at(def.name + ".bias");
    std::fill(bt.data(), bt.data() + bt.size(), 0.0f);
  }
  std::mt19937_64 rng(7);
  Tensor f1 = rand_tensor({cfg.encoder_channels(5), 6, 6}, rng);
  Tensor f2 = rand_tensor({cfg.encoder_channels(5), 6, 6}, rng);
  Tensor prev = rand_tensor({2, 3, 3}, rng);

  MatchOutput out = matching_unit(f1, f2, &prev, w, cfg, 5);
  Tensor expected = deconv2d(prev, w.at("upconv5_M.weight"), ConvSpec::upsample2(2));
  CHECK(max_abs_diff(out.flow, expected) == 0.0);
  CHECK(bit_equal(out.flow_up, expected));
}

TEST_CASE("residual composition: flow == flow_up + filtered volume, recomputed") {
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  ModelWeights w = matcher_weights(cfg, 4, 8);
  std::mt19937_64 rng(9);
  const int fk = cfg.encoder_channels(4);
  Tensor f1 = rand_tensor({fk, 8, 8}, rng);
  Tensor f2 = rand_tensor({fk, 8, 8}, rng);
  Tensor prev = rand_tensor({2, 4, 4}, rng, -0.5f, 0.5f);

  MatchOutput out = matching_unit(f1, f2, &prev, w, cfg, 4);

  Tensor f2w = f_warp(f2, out.flow_up);
  Tensor x = cost_volume(f1, f2w, match_config(cfg, 4));
  const auto defs = matcher_layers(cfg, 4);
  for (size_t i = 1; i < defs.size(); ++i) {
    x = conv2d(x, w.at(defs[i].name + ".weight"), w.at(defs[i].name + ".bias"), defs[i].spec);
    if (i + 1 < defs.size()) x = leaky_relu(x, cfg.leaky_slope);
  }
  CHECK(bit_equal(out.flow, add(out.flow_up, x)));
}

TEST_CASE("level 6 with identical images: cost volume peaks at zero displacement") {
  std::mt19937_64 rng(10);
  Tensor f = unit_norm_features(32, 4, 4, rng);
  Tensor zero_flow(Shape{2, 4, 4});
  Tensor f2w = f_warp(f, zero_flow);
  Tensor vol = cost_volume(f, f2w, MatchConfig{3, 1});
  const int center = 24;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int d = 0; d < 49; ++d)
        if (d != center) CHECK(vol.at(d, y, x) <= vol.at(center, y, x) + 1e-6f);
}

TEST_CASE("warping by the exact shift turns long-range matching into d=0") {
  std::mt19937_64 rng(11);
  const int h = 10, w = 10, tx = 4;
  Tensor f1 = unit_norm_features(8, h, w, rng);
  // f2 is f1 translated by tx pixels: f2(x) = f1(x - tx).
  Tensor f2(Shape{8, h, w});
  for (int c = 0; c < 8; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        f2.at(c, y, x) = f1.at(c, y, std::max(0, x - tx));
  // Warp with the exact flow (tx, 0); the displacement exceeds the search
  // radius, but post-warp matching peaks at zero displacement everywhere in
  // the interior.
  Tensor flow = constant_flow(h, w, static_cast<float>(tx), 0.0f);
  Tensor f2w = f_warp(f2, flow);
  Tensor vol = cost_volume(f1, f2w, MatchConfig{3, 1});
  const int center = 24;
  for (int y = 3; y < h - 3; ++y)
    for (int x = 3; x < w - 3 - tx; ++x)
      for (int d = 0; d < 49; ++d)
        if (d != center) CHECK(vol.at(d, y, x) <= vol.at(center, y, x) + 1e-6f);
}

TEST_CASE("wrong-level prior flow is rejected") {
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  ModelWeights w = matcher_weights(cfg, 5, 12);
  std::mt19937_64 rng(13);
  Tensor f1 = rand_tensor({cfg.encoder_channels(5), 6, 6}, rng);
  Tensor f2 = rand_tensor({cfg.encoder_channels(5), 6, 6}, rng);
  Tensor bad_prev = rand_tensor({2, 6, 6}, rng); // same level, not half
  CHECK_THROWS_AS(matching_unit(f1, f2, &bad_prev, w, cfg, 5), ShapeError);
}

TEST_CASE("match configuration follows the per-level schedule") {
  ModelConfig cfg;
  for (int level : {6, 5, 4}) {
    CHECK(match_config(cfg, level).radius == 3);
    CHECK(match_config(cfg, level).stride == 1);
  }
  for (int level : {3, 2}) {
    CHECK(match_config(cfg, level).radius == 6);
    CHECK(match_config(cfg, level).stride == 2);
  }
}
