#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "pyraflow/tensor.hpp"

namespace pyraflow {

/// Ordered, named collection of parameter tensors. Insertion order is the
/// serialization order. Lookup of a missing name throws with the name.
class ModelWeights {
public:
  void add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  const std::vector<std::string>& names() const { return order_; }
  size_t count() const { return order_.size(); }
  int64_t parameter_count() const;

private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> map_;
};

/// One parameter-bearing layer of the assembled network.
struct LayerDef {
  std::string name;
  ConvSpec spec;
  bool has_bias = true;
  bool transposed = false;
  bool zero_init = false; // unit output layers start as an exact zero residual

  Shape weight_shape() const {
    if (transposed)
      return {spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w};
    return {spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  }
};

/// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases
/// zero. Transposed layers are seeded as exact bilinear x2 upsamplers with
/// gain 2 so they start out doubling flow magnitude with the resolution.
void init_layer(ModelWeights& w, const LayerDef& def, std::mt19937_64& rng);

/// Adds `def` initialized from the same-named layer at `source_level` when
/// shapes match (the stage-wise warm start), else fresh.
void init_layer_from(ModelWeights& w, const LayerDef& def, const std::string& source_name,
                     std::mt19937_64& rng);

} // namespace pyraflow
