#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pyraflow/tensor.hpp"

namespace pyraflow {

/// Reverse-mode gradient tape. Ops executed with a non-null tape push one
/// node each; `backward` replays the nodes in reverse order. Gradients are
/// keyed by storage identity, so a tensor feeding several consumers
/// accumulates the sum of all incoming gradients. Replay order is fixed by
/// the recording order, which makes accumulation deterministic.
template <typename T>
class TapeT {
public:
  using BackFn = std::function<void(TapeT&)>;

  void record(const char* op, BackFn back) {
    nodes_.push_back(Node{op, std::move(back)});
  }

  /// Gradient accumulation buffer for `t`, created zero-filled on first use.
  TensorT<T>& grad_buffer(const TensorT<T>& t) {
    auto it = grads_.find(t.key());
    if (it == grads_.end())
      it = grads_.emplace(t.key(), TensorT<T>(t.shape())).first;
    return it->second;
  }

  const TensorT<T>* find_grad(const TensorT<T>& t) const {
    auto it = grads_.find(t.key());
    return it == grads_.end() ? nullptr : &it->second;
  }

  /// Gradient of the last `backward` pass wrt `t`; zeros if `t` never
  /// received one (disconnected from the loss).
  TensorT<T> grad(const TensorT<T>& t) const {
    const TensorT<T>* g = find_grad(t);
    return g ? *g : TensorT<T>(t.shape());
  }

  void backward(const TensorT<T>& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
    grad_buffer(loss).data()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->back)
        throw std::runtime_error(std::string("backward: op '") + it->op +
                                 "' has no registered backward rule");
      it->back(*this);
    }
  }

  size_t node_count() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

private:
  struct Node {
    const char* op;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const void*, TensorT<T>> grads_;
};

using Tape = TapeT<float>;

/// dst += src, shapes must match. The workhorse of gradient accumulation.
template <typename T>
void accumulate(TensorT<T>& dst, const TensorT<T>& src) {
  if (!dst.same_shape(src)) throw ShapeError("accumulate: shape mismatch");
  T* d = dst.data();
  const T* s = src.data();
  for (int64_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

} // namespace pyraflow
