#include "pyraflow/pipeline.hpp"

#include <algorithm>

#include "pyraflow/errors.hpp"

namespace pyraflow {

namespace {

std::vector<LayerDef> level_layers(const ModelConfig& cfg, int level, bool with_r) {
  std::vector<LayerDef> defs = matcher_layers(cfg, level);
  for (auto& d : refiner_layers(cfg, level)) defs.push_back(d);
  if (with_r)
    for (auto& d : regularizer_layers(cfg, level)) defs.push_back(d);
  return defs;
}

/// Same layer name one level coarser: conv5_1_M -> conv6_1_M.
std::string coarser_name(const std::string& name, int level) {
  std::string out = name;
  const std::string digit = std::to_string(level);
  size_t pos = out.find(digit);
  if (pos != std::string::npos) out.replace(pos, digit.size(), std::to_string(level + 1));
  return out;
}

} // namespace

std::vector<LayerDef> model_layers(const ModelConfig& cfg, const CascadePlan& plan) {
  if (plan.finest_level < ModelConfig::kFinest || plan.finest_level > ModelConfig::kLevels)
    throw ShapeError("model_layers: finest level " + std::to_string(plan.finest_level) +
                     " outside [2,6]");
  std::vector<LayerDef> defs = encoder_layers(cfg);
  for (int k = ModelConfig::kLevels; k >= plan.finest_level; --k)
    for (auto& d : level_layers(cfg, k, plan.has_regularizer(k))) defs.push_back(d);
  return defs;
}

ModelWeights init_weights(const ModelConfig& cfg, std::mt19937_64& rng, const CascadePlan& plan) {
  ModelWeights w;
  for (const LayerDef& def : model_layers(cfg, plan)) init_layer(w, def, rng);
  return w;
}

void grow_weights(ModelWeights& w, const ModelConfig& cfg, const CascadePlan& from,
                  const CascadePlan& to, std::mt19937_64& rng) {
  if (to.finest_level > from.finest_level)
    throw ShapeError("grow_weights: target plan is coarser than the current one");
  // Coarsest-level regularizer turned on.
  if (!from.has_regularizer(ModelConfig::kLevels) && to.has_regularizer(ModelConfig::kLevels))
    for (const LayerDef& def : regularizer_layers(cfg, ModelConfig::kLevels))
      init_layer(w, def, rng);
  // Newly attached finer levels, warm-started from the level above.
  for (int k = from.finest_level - 1; k >= to.finest_level; --k)
    for (const LayerDef& def : level_layers(cfg, k, to.has_regularizer(k)))
      init_layer_from(w, def, coarser_name(def.name, k), rng);
}

void validate_weights(const ModelWeights& w, const ModelConfig& cfg, const CascadePlan& plan) {
  std::vector<std::string> expected;
  for (const LayerDef& def : model_layers(cfg, plan)) {
    const std::string wname = def.name + ".weight";
    if (!w.has(wname)) throw ShapeError("weights: missing parameter '" + wname + "'");
    if (w.at(wname).shape() != def.weight_shape())
      throw ShapeError("weights: parameter '" + wname + "' has shape " +
                       shape_str(w.at(wname).shape()) + ", expected " +
                       shape_str(def.weight_shape()));
    expected.push_back(wname);
    if (def.has_bias && !def.transposed) {
      const std::string bname = def.name + ".bias";
      if (!w.has(bname)) throw ShapeError("weights: missing parameter '" + bname + "'");
      if (w.at(bname).shape() != Shape{def.spec.out_channels})
        throw ShapeError("weights: parameter '" + bname + "' has shape " +
                         shape_str(w.at(bname).shape()) + ", expected (" +
                         std::to_string(def.spec.out_channels) + ")");
      expected.push_back(bname);
    }
  }
  if (expected.size() != w.count()) {
    std::sort(expected.begin(), expected.end());
    for (const auto& name : w.names())
      if (!std::binary_search(expected.begin(), expected.end(), name))
        throw ShapeError("weights: unexpected parameter '" + name + "'");
  }
}

Tensor upsample_flow2(const Tensor& flow) {
  Tensor up = bilinear_upsample2(flow);
  for (int64_t i = 0; i < up.size(); ++i) up.data()[i] *= 2.0f;
  return up;
}

ForwardResult forward(const Tensor& im1, const Tensor& im2, const ModelWeights& w,
                      const ModelConfig& cfg, const CascadePlan& plan, Tape* tape,
                      ShapeTrace* trace) {
  if (!im1.same_shape(im2))
    throw ShapeError("forward: image shapes differ: " + shape_str(im1.shape()) + " vs " +
                     shape_str(im2.shape()));

  FeaturePyramid p1 = build_pyramid(im1, w, cfg, tape, trace);
  FeaturePyramid p2 = build_pyramid(im2, w, cfg, tape, nullptr);

  ForwardResult result;
  result.finest_level = plan.finest_level;

  // Down-sized image pyramids for the brightness-error path.
  std::array<Tensor, 7> im1_levels, im2_levels;
  {
    Tensor a = im1, b = im2;
    for (int k = 1; k <= ModelConfig::kLevels; ++k) {
      if (k > 1) {
        a = avg_pool2(a);
        b = avg_pool2(b);
      }
      im1_levels[static_cast<size_t>(k)] = a;
      im2_levels[static_cast<size_t>(k)] = b;
    }
  }

  Tensor prev;
  for (int k = ModelConfig::kLevels; k >= plan.finest_level; --k) {
    LevelFlows& lf = result.levels[static_cast<size_t>(k)];
    MatchOutput m = matching_unit(p1.level(k), p2.level(k), prev.defined() ? &prev : nullptr, w,
                                  cfg, k, tape, trace);
    lf.m = m.flow;
    lf.s = refinement_unit(p1.level(k), p2.level(k), lf.m, w, cfg, k, tape, trace);
    if (plan.has_regularizer(k))
      lf.r = regularization_unit(p1.level(k), im1_levels[static_cast<size_t>(k)],
                                 im2_levels[static_cast<size_t>(k)], lf.s, w, cfg, k, tape, trace);
    prev = lf.r.defined() ? lf.r : lf.s;
  }

  // Final output: upsample the finest estimate back to level 1.
  Tensor full = prev;
  for (int k = plan.finest_level; k > 1; --k) full = upsample_flow2(full);
  result.flow = full;
  trace_shape(trace, "flow1", full);
  return result;
}

Tensor downsample_gt_flow(const Tensor& gt_full, int level) {
  Tensor g = gt_full;
  for (int i = 1; i < level; ++i) {
    g = avg_pool2(g);
    for (int64_t j = 0; j < g.size(); ++j) g.data()[j] *= 0.5f;
  }
  return g;
}

Tensor multi_level_loss(const ForwardResult& result, const Tensor& gt_full, const ModelConfig& cfg,
                        Tape* tape) {
  if (gt_full.rank() != 3 || gt_full.channels() != 2)
    throw ShapeError("multi_level_loss: ground truth must be (2,H,W)");
  std::vector<Tensor> terms;
  std::vector<float> weights;
  std::array<Tensor, 7> gt_levels;
  {
    Tensor g = gt_full;
    for (int k = 1; k <= ModelConfig::kLevels; ++k) {
      if (k > 1) {
        g = avg_pool2(g);
        for (int64_t j = 0; j < g.size(); ++j) g.data()[j] *= 0.5f;
      }
      gt_levels[static_cast<size_t>(k)] = g;
    }
  }
  for (int k = ModelConfig::kLevels; k >= result.finest_level; --k) {
    const LevelFlows& lf = result.level(k);
    if (!lf.m.defined())
      throw ShapeError("multi_level_loss: missing level " + std::to_string(k) + " flows");
    const Tensor& gt_k = gt_levels[static_cast<size_t>(k)];
    const float wk = cfg.level_weight(k);
    for (const Tensor* est : {&lf.m, &lf.s, &lf.r}) {
      if (!est->defined()) continue;
      terms.push_back(
          flow_penalty_sum(*est, gt_k, cfg.loss, cfg.charbonnier_eps, cfg.charbonnier_q, tape));
      weights.push_back(wk);
    }
  }
  return weighted_sum(terms, weights, tape);
}

ParameterBreakdown parameter_breakdown(const ModelWeights& w) {
  ParameterBreakdown out;
  for (const auto& name : w.names()) {
    const int64_t n = w.at(name).size();
    out.total += n;
    if (name.find("_M.") != std::string::npos)
      out.matching += n;
    else if (name.find("_S.") != std::string::npos)
      out.refinement += n;
    else if (name.find("_R.") != std::string::npos)
      out.regularization += n;
    else
      out.encoder += n;
  }
  return out;
}

} // namespace pyraflow
