#include "pyraflow/refiner.hpp"

#include "pyraflow/errors.hpp"
#include "pyraflow/warp.hpp"

namespace pyraflow {

std::vector<LayerDef> refiner_layers(const ModelConfig& cfg, int level) {
  const std::string k = std::to_string(level);
  const int fk = cfg.encoder_channels(level);
  const int h128 = cfg.hidden(128), h64 = cfg.hidden(64), h32 = cfg.hidden(32);
  LayerDef last{"conv" + k + "_4_S", ConvSpec::same(h32, 2, cfg.last_kernel(level))};
  last.zero_init = true;
  return {
      {"conv" + k + "_1_S", ConvSpec::same(2 * fk + 2, h128, 3)},
      {"conv" + k + "_2_S", ConvSpec::same(h128, h64, 3)},
      {"conv" + k + "_3_S", ConvSpec::same(h64, h32, 3)},
      last,
  };
}

Tensor refinement_unit(const Tensor& f1, const Tensor& f2, const Tensor& flow_m,
                       const ModelWeights& w, const ModelConfig& cfg, int level,
                       Tape* tape, ShapeTrace* trace) {
  if (!f1.same_shape(f2))
    throw ShapeError("refinement_unit: feature shapes differ");
  if (flow_m.height() != f1.height() || flow_m.width() != f1.width())
    throw ShapeError("refinement_unit: flow " + shape_str(flow_m.shape()) +
                     " does not match features " + shape_str(f1.shape()));
  const std::string k = std::to_string(level);

  Tensor f2w = f_warp(f2, flow_m, tape);
  trace_shape(trace, "f-warp" + k + "_S", f2w);

  // Input order (F1, warped F2, flow) is part of the weight-file contract.
  Tensor x = concat_channels<float>({f1, f2w, flow_m}, tape);
  trace_shape(trace, "conv" + k + "_1_S.in", x);

  const auto defs = refiner_layers(cfg, level);
  for (size_t i = 0; i < defs.size(); ++i) {
    const LayerDef& def = defs[i];
    x = conv2d(x, w.at(def.name + ".weight"), w.at(def.name + ".bias"), def.spec, tape);
    if (i + 1 < defs.size()) x = leaky_relu(x, cfg.leaky_slope, tape);
    trace_shape(trace, def.name, x);
  }

  Tensor flow = add(flow_m, x, tape);
  trace_shape(trace, "flow" + k + "_S", flow);
  return flow;
}

} // namespace pyraflow
