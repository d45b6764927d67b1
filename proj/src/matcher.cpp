#include "pyraflow/matcher.hpp"

#include "pyraflow/errors.hpp"
#include "pyraflow/warp.hpp"

namespace pyraflow {

MatchConfig match_config(const ModelConfig& cfg, int level) {
  return MatchConfig{cfg.match_radius(level), cfg.match_stride(level)};
}

std::vector<LayerDef> matcher_layers(const ModelConfig& cfg, int level) {
  const std::string k = std::to_string(level);
  const int volume_ch = match_config(cfg, level).channels();
  const int h128 = cfg.hidden(128), h64 = cfg.hidden(64), h32 = cfg.hidden(32);
  std::vector<LayerDef> defs;
  if (level < ModelConfig::kLevels)
    defs.push_back({"upconv" + k + "_M", ConvSpec::upsample2(2), /*has_bias=*/false,
                    /*transposed=*/true});
  defs.push_back({"conv" + k + "_1_M", ConvSpec::same(volume_ch, h128, 3)});
  defs.push_back({"conv" + k + "_2_M", ConvSpec::same(h128, h64, 3)});
  defs.push_back({"conv" + k + "_3_M", ConvSpec::same(h64, h32, 3)});
  LayerDef last{"conv" + k + "_4_M", ConvSpec::same(h32, 2, cfg.last_kernel(level))};
  last.zero_init = true;
  defs.push_back(last);
  return defs;
}

MatchOutput matching_unit(const Tensor& f1, const Tensor& f2, const Tensor* flow_prev,
                          const ModelWeights& w, const ModelConfig& cfg, int level,
                          Tape* tape, ShapeTrace* trace) {
  if (!f1.same_shape(f2))
    throw ShapeError("matching_unit: feature shapes differ: " + shape_str(f1.shape()) + " vs " +
                     shape_str(f2.shape()));
  const std::string k = std::to_string(level);

  Tensor flow_up;
  if (flow_prev) {
    if (flow_prev->channels() != 2 || flow_prev->height() * 2 != f1.height() ||
        flow_prev->width() * 2 != f1.width())
      throw ShapeError("matching_unit: prior flow " + shape_str(flow_prev->shape()) +
                       " is not the level-" + std::to_string(level + 1) + " field for features " +
                       shape_str(f1.shape()));
    flow_up = deconv2d(*flow_prev, w.at("upconv" + k + "_M.weight"), ConvSpec::upsample2(2), tape);
    trace_shape(trace, "upconv" + k + "_M", flow_up);
  } else {
    flow_up = Tensor(Shape{2, f1.height(), f1.width()});
  }

  Tensor f2w = f_warp(f2, flow_up, tape);
  trace_shape(trace, "f-warp" + k + "_M", f2w);

  Tensor x = cost_volume(f1, f2w, match_config(cfg, level), tape);
  trace_shape(trace, "corr" + k + "_M", x);

  const auto defs = matcher_layers(cfg, level);
  const size_t first_conv = defs.front().transposed ? 1 : 0;
  for (size_t i = first_conv; i < defs.size(); ++i) {
    const LayerDef& def = defs[i];
    x = conv2d(x, w.at(def.name + ".weight"), w.at(def.name + ".bias"), def.spec, tape);
    if (i + 1 < defs.size()) x = leaky_relu(x, cfg.leaky_slope, tape);
    trace_shape(trace, def.name, x);
  }

  Tensor flow = add(flow_up, x, tape);
  trace_shape(trace, "flow" + k + "_M", flow);
  return {flow, flow_up};
}

} // namespace pyraflow
