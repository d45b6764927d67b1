#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pyraflow/encoder.hpp"
#include "pyraflow/metrics.hpp"
#include "pyraflow/refiner.hpp"
#include "pyraflow/synthetic.hpp"
#include "pyraflow/train.hpp"
#include "pyraflow/warp.hpp"
#include "test_support.hpp"

using namespace pyraflow;
using namespace pyraflow::testing;

namespace {

ModelWeights refiner_weights(const ModelConfig& cfg, int level, uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelWeights w;
  for (const LayerDef& def : refiner_layers(cfg, level)) init_layer(w, def, rng);
  return w;
}

} // namespace

TEST_CASE("refinement at level 5 stacks 128+128+2 = 258 input channels") {
  ModelConfig cfg;
  ModelWeights w = refiner_weights(cfg, 5, 1);
  std::mt19937_64 rng(2);
  Tensor f1 = rand_tensor({128, 4, 4}, rng);
  Tensor f2 = rand_tensor({128, 4, 4}, rng);
  Tensor flow_m = rand_tensor({2, 4, 4}, rng, -0.5f, 0.5f);

  ShapeTrace trace;
  Tensor flow_s = refinement_unit(f1, f2, flow_m, w, cfg, 5, nullptr, &trace);
  CHECK(flow_s.shape() == Shape{2, 4, 4});

  bool found = false;
  for (const auto& [name, shape] : trace)
    if (name == "conv5_1_S.in") {
      CHECK(shape == Shape{258, 4, 4});
      found = true;
    }
  CHECK(found);
}

TEST_CASE("zero-weight stack leaves the matched flow untouched") {
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  ModelWeights w = refiner_weights(cfg, 4, 3);
  for (const LayerDef& def : refiner_layers(cfg, 4)) {
    Tensor& wt = w.at(def.name + ".weight");
    std::fill(wt.data(), wt.data() + wt.size(), 0.0f);
    Tensor& bt = w.at(def.name + ".bias");
    std::fill(bt.data(), bt.data() + bt.size(), 0.0f);
  }
  std::mt19937_64 rng(4);
  const int fk = cfg.encoder_channels(4);
  Tensor f1 = rand_tensor({fk, 6, 6}, rng);
  Tensor f2 = rand_tensor({fk, 6, 6}, rng);
  Tensor flow_m = rand_tensor({2, 6, 6}, rng);
  Tensor flow_s = refinement_unit(f1, f2, flow_m, w, cfg, 4);
  CHECK(max_abs_diff(flow_s, flow_m) == 0.0);
}

TEST_CASE("residual property: output minus input flow is the stack output") {
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  ModelWeights w = refiner_weights(cfg, 3, 5);
  std::mt19937_64 rng(6);
  const int fk = cfg.encoder_channels(3);
  Tensor f1 = rand_tensor({fk, 6, 6}, rng);
  Tensor f2 = rand_tensor({fk, 6, 6}, rng);
  Tensor flow_m = rand_tensor({2, 6, 6}, rng, -0.4f, 0.4f);

  Tensor flow_s = refinement_unit(f1, f2, flow_m, w, cfg, 3);

  Tensor f2w = f_warp(f2, flow_m);
  Tensor x = concat_channels<float>({f1, f2w, flow_m});
  const auto defs = refiner_layers(cfg, 3);
  for (size_t i = 0; i < defs.size(); ++i) {
    x = conv2d(x, w.at(defs[i].name + ".weight"), w.at(defs[i].name + ".bias"), defs[i].spec);
    if (i + 1 < defs.size()) x = leaky_relu(x, cfg.leaky_slope);
  }
  CHECK(bit_equal(flow_s, add(flow_m, x)));
}

TEST_CASE("shape mismatches are rejected") {
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  ModelWeights w = refiner_weights(cfg, 5, 7);
  std::mt19937_64 rng(8);
  const int fk = cfg.encoder_channels(5);
  Tensor f1 = rand_tensor({fk, 4, 4}, rng);
  Tensor f2 = rand_tensor({fk, 6, 6}, rng);
  Tensor flow_m = rand_tensor({2, 4, 4}, rng);
  CHECK_THROWS_AS(refinement_unit(f1, f2, flow_m, w, cfg, 5), ShapeError);
}

TEST_CASE("a trained tiny refiner beats the half-pixel input error") {
  // Features at level 2 of a narrow encoder; the matched flow is off by
  // exactly half a pixel in u from the ground truth.
  ModelConfig cfg;
  cfg.width_scale = 0.25f;
  cfg.seed = 9;

  std::mt19937_64 rng(cfg.seed);
  ModelWeights w;
  for (const LayerDef& def : encoder_layers(cfg)) init_layer(w, def, rng);
  for (const LayerDef& def : refiner_layers(cfg, 2)) init_layer(w, def, rng);

  const TrainSample sample = make_translation_sample(32, 3.0f, -2.0f, 42);
  FeaturePyramid p1 = build_pyramid(sample.im1, w, cfg);
  FeaturePyramid p2 = build_pyramid(sample.im2, w, cfg);
  // Level-2 ground truth: half resolution, half magnitude.
  Tensor gt2 = constant_flow(16, 16, 1.5f, -1.0f);
  Tensor flow_m = constant_flow(16, 16, 1.0f, -1.0f); // gt - 0.5 px in u
  CHECK(aee(flow_m, gt2) == doctest::Approx(0.5f));

  Adam adam(0.9f, 0.999f, 1e-8f);
  float final_aee = 1.0f;
  for (int it = 0; it < 250; ++it) {
    Tape tape;
    Tensor flow_s = refinement_unit(p1.level(2), p2.level(2), flow_m, w, cfg, 2, &tape);
    Tensor loss = flow_penalty_sum(flow_s, gt2, PenaltyKind::kSquaredL2, 0.01f, 0.2f, &tape);
    tape.backward(loss);
    adam.step(w, tape, 2e-4f);
    final_aee = aee(flow_s, gt2);
  }
  CHECK(final_aee < 0.5f);
}
