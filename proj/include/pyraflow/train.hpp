#pragma once

#include "pyraflow/pipeline.hpp"

namespace pyraflow {

/// One supervised example: an image pair and its ground-truth flow at full
/// resolution.
struct TrainSample {
  Tensor im1;
  Tensor im2;
  Tensor gt;
};

/// Adam over the named parameters, moments keyed by parameter name so the
/// state survives the stage-wise growth of the weight set.
class Adam {
public:
  Adam(float beta1, float beta2, float eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelWeights& w, const Tape& tape, float lr);

private:
  struct Moments {
    Tensor m, v;
    int64_t t = 0;
  };
  float beta1_, beta2_, eps_;
  std::unordered_map<std::string, Moments> state_;
};

struct TrainRecord {
  int iter;   // global iteration index, starting at 0
  int stage;  // 0..5
  float lr;
  float loss;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<TrainRecord> curve;
};

/// Miniature stage-wise schedule: (0) coarsest matching+refinement, (1) add
/// the coarsest regularizer, (2..5) add one finer level at a time, warm
/// starting from the level above. Adam on the multi-level loss throughout;
/// the recorded loss at each iteration is evaluated before the update, so
/// record 0 is the loss of the freshly initialized model. Diverging (NaN)
/// loss raises TrainingError with the iteration index.
TrainResult train_toy(const std::vector<TrainSample>& data, const ModelConfig& cfg,
                      const TrainHyper& hyper);

/// The cascade plan trained at stage 0..5.
CascadePlan stage_plan(int stage);

} // namespace pyraflow
