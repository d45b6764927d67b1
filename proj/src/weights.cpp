#include "pyraflow/weights.hpp"

#include <cmath>

#include "pyraflow/errors.hpp"
#include "pyraflow/ops.hpp"

namespace pyraflow {

void ModelWeights::add(const std::string& name, Tensor t) {
  if (map_.count(name)) throw ShapeError("ModelWeights: duplicate parameter '" + name + "'");
  order_.push_back(name);
  map_.emplace(name, std::move(t));
}

bool ModelWeights::has(const std::string& name) const { return map_.count(name) != 0; }

const Tensor& ModelWeights::at(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw ShapeError("ModelWeights: missing parameter '" + name + "'");
  return it->second;
}

Tensor& ModelWeights::at(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw ShapeError("ModelWeights: missing parameter '" + name + "'");
  return it->second;
}

int64_t ModelWeights::parameter_count() const {
  int64_t total = 0;
  for (const auto& name : order_) total += map_.at(name).size();
  return total;
}

void init_layer(ModelWeights& w, const LayerDef& def, std::mt19937_64& rng) {
  if (def.transposed) {
    w.add(def.name + ".weight", bilinear_upsample_kernel<float>(def.spec.in_channels, 2.0f));
    return;
  }
  if (def.zero_init) {
    w.add(def.name + ".weight", Tensor(def.weight_shape()));
    if (def.has_bias) w.add(def.name + ".bias", Tensor(Shape{def.spec.out_channels}));
    return;
  }
  const float fan_in =
      static_cast<float>(def.spec.in_channels) * def.spec.kernel_h * def.spec.kernel_w;
  // Variance 2/fan_in keeps activation scale stable through the rectified
  // stacks; uniform bound sqrt(6/fan_in).
  const float bound = std::sqrt(6.0f / fan_in);
  std::uniform_real_distribution<float> dist(-bound, bound);
  Tensor weight(def.weight_shape());
  for (int64_t i = 0; i < weight.size(); ++i) weight.data()[i] = dist(rng);
  w.add(def.name + ".weight", std::move(weight));
  if (def.has_bias) w.add(def.name + ".bias", Tensor(Shape{def.spec.out_channels}));
}

void init_layer_from(ModelWeights& w, const LayerDef& def, const std::string& source_name,
                     std::mt19937_64& rng) {
  const std::string src_w = source_name + ".weight";
  if (!def.transposed && w.has(src_w) && w.at(src_w).shape() == def.weight_shape()) {
    w.add(def.name + ".weight", w.at(src_w).clone());
    if (def.has_bias) w.add(def.name + ".bias", w.at(source_name + ".bias").clone());
    return;
  }
  init_layer(w, def, rng);
}

} // namespace pyraflow
