#include "pyraflow/train.hpp"

#include <cmath>

#include "pyraflow/errors.hpp"

namespace pyraflow {

void Adam::step(ModelWeights& w, const Tape& tape, float lr) {
  for (const auto& name : w.names()) {
    Tensor& param = w.at(name);
    const Tensor* grad = tape.find_grad(param);
    if (!grad) continue;
    Moments& mo = state_[name];
    if (!mo.m.defined()) {
      mo.m = Tensor(param.shape());
      mo.v = Tensor(param.shape());
    }
    ++mo.t;
    const float c1 = 1.0f - std::pow(beta1_, static_cast<float>(mo.t));
    const float c2 = 1.0f - std::pow(beta2_, static_cast<float>(mo.t));
    float* p = param.data();
    float* m = mo.m.data();
    float* v = mo.v.data();
    const float* g = grad->data();
    for (int64_t i = 0; i < param.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * g[i] * g[i];
      const float mhat = m[i] / c1;
      const float vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

CascadePlan stage_plan(int stage) {
  if (stage < 0 || stage > 5) throw ConfigError("stage_plan: stage must be 0..5");
  CascadePlan plan;
  if (stage == 0) {
    plan.finest_level = 6;
    plan.regularize_coarsest = false;
  } else {
    plan.finest_level = std::max(2, 6 - (stage - 1));
    plan.regularize_coarsest = true;
  }
  return plan;
}

TrainResult train_toy(const std::vector<TrainSample>& data, const ModelConfig& cfg,
                      const TrainHyper& hyper) {
  if (data.empty()) throw TrainingError("train_toy: empty dataset");
  for (const auto& s : data)
    if (!s.im1.same_shape(s.im2) || s.gt.channels() != 2 || s.gt.height() != s.im1.height() ||
        s.gt.width() != s.im1.width() || !all_finite(s.gt))
      throw ShapeError("train_toy: malformed training sample");

  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 order_rng(hyper.seed);
  ModelWeights weights = init_weights(cfg, rng, stage_plan(0));
  Adam adam(hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps);

  TrainResult result;
  int global_iter = 0;
  for (int stage = 0; stage < 6; ++stage) {
    const CascadePlan plan = stage_plan(stage);
    if (stage > 0) grow_weights(weights, cfg, stage_plan(stage - 1), plan, rng);

    const int iters = hyper.stage_iters[static_cast<size_t>(stage)];
    std::vector<int> halve_at;
    for (float frac : hyper.lr_milestones)
      halve_at.push_back(static_cast<int>(std::floor(frac * static_cast<float>(iters))));

    float lr = hyper.stage_lr[static_cast<size_t>(stage)];
    for (int it = 0; it < iters; ++it) {
      for (int ms : halve_at)
        if (it == ms && ms > 0) lr *= 0.5f;

      const TrainSample& sample = data[order_rng() % data.size()];
      Tape tape;
      ForwardResult fwd = forward(sample.im1, sample.im2, weights, cfg, plan, &tape);
      Tensor loss = multi_level_loss(fwd, sample.gt, cfg, &tape);
      const float loss_value = loss.scalar();
      if (!std::isfinite(loss_value))
        throw TrainingError("train_toy: loss diverged (NaN/Inf) at iteration " +
                            std::to_string(global_iter));
      result.curve.push_back({global_iter, stage, lr, loss_value});
      tape.backward(loss);
      adam.step(weights, tape, lr);
      ++global_iter;
    }
  }
  result.weights = std::move(weights);
  return result;
}

} // namespace pyraflow
