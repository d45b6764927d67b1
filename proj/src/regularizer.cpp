#include "pyraflow/regularizer.hpp"

#include "pyraflow/errors.hpp"
#include "pyraflow/warp.hpp"

namespace pyraflow {

Tensor occlusion_map(const Tensor& im1, const Tensor& im2, const Tensor& flow, Tape* tape) {
  if (!im1.same_shape(im2))
    throw ShapeError("occlusion_map: image shapes differ: " + shape_str(im1.shape()) + " vs " +
                     shape_str(im2.shape()));
  Tensor warped = warp_image(im2, flow, tape);
  return channel_l2norm(sub(warped, im1, tape), tape);
}

Tensor remove_mean(const Tensor& flow, Tape* tape) { return remove_channel_mean(flow, tape); }

std::vector<LayerDef> regularizer_layers(const ModelConfig& cfg, int level) {
  const std::string k = std::to_string(level);
  const int fk = cfg.encoder_channels(level);
  const int w2 = cfg.lconv_window(level) * cfg.lconv_window(level);
  const int h128 = cfg.hidden(128), h64 = cfg.hidden(64), h32 = cfg.hidden(32);
  // Zero-initialized distance output: D starts constant, so the filters
  // start as uniform averaging.
  LayerDef dist{"conv" + k + "_dist_R", ConvSpec::same(h32, w2, cfg.last_kernel(level))};
  dist.zero_init = true;
  return {
      {"conv" + k + "_1_R", ConvSpec::same(fk + 3, h128, 3)},
      {"conv" + k + "_2_R", ConvSpec::same(h128, h128, 3)},
      {"conv" + k + "_3_R", ConvSpec::same(h128, h64, 3)},
      {"conv" + k + "_4_R", ConvSpec::same(h64, h64, 3)},
      {"conv" + k + "_5_R", ConvSpec::same(h64, h32, 3)},
      {"conv" + k + "_6_R", ConvSpec::same(h32, h32, 3)},
      dist,
  };
}

Tensor distance_metric(const Tensor& f1, const Tensor& flow_s, const Tensor& occ,
                       const ModelWeights& w, const ModelConfig& cfg, int level,
                       Tape* tape, ShapeTrace* trace) {
  if (f1.height() != flow_s.height() || f1.width() != flow_s.width() ||
      occ.height() != f1.height() || occ.width() != f1.width())
    throw ShapeError("distance_metric: level extents differ between features " +
                     shape_str(f1.shape()) + ", flow " + shape_str(flow_s.shape()) +
                     ", occlusion " + shape_str(occ.shape()));
  const std::string k = std::to_string(level);

  Tensor rm = remove_mean(flow_s, tape);
  trace_shape(trace, "rm-flow" + k + "_R", rm);

  Tensor x = concat_channels<float>({f1, rm, occ}, tape);
  trace_shape(trace, "conv" + k + "_1_R.in", x);

  const auto defs = regularizer_layers(cfg, level);
  for (size_t i = 0; i < defs.size(); ++i) {
    const LayerDef& def = defs[i];
    x = conv2d(x, w.at(def.name + ".weight"), w.at(def.name + ".bias"), def.spec, tape);
    if (i + 1 < defs.size()) x = leaky_relu(x, cfg.leaky_slope, tape);
    trace_shape(trace, def.name, x);
  }
  return x;
}

Tensor regularization_unit(const Tensor& f1, const Tensor& im1_k, const Tensor& im2_k,
                           const Tensor& flow_s, const ModelWeights& w, const ModelConfig& cfg,
                           int level, Tape* tape, ShapeTrace* trace) {
  const std::string k = std::to_string(level);

  Tensor occ = occlusion_map(im1_k, im2_k, flow_s, tape);
  trace_shape(trace, "norm" + k + "_R", occ);

  Tensor dist = distance_metric(f1, flow_s, occ, w, cfg, level, tape, trace);

  Tensor filters = build_filters(dist, tape);
  trace_shape(trace, "softmax" + k + "_R", filters);

  Tensor flow = f_lconv(flow_s, filters, tape);
  trace_shape(trace, "flow" + k + "_R", flow);
  return flow;
}

} // namespace pyraflow
