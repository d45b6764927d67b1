#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pyraflow/errors.hpp"

namespace pyraflow {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense N-D array of scalars, row-major with the last extent fastest.
/// Feature maps use (channels, height, width). Copies share storage; the
/// storage address doubles as the tensor's identity for gradient bookkeeping.
/// Outputs of forward ops are treated as immutable once produced.
template <typename T>
class TensorT {
public:
  TensorT() = default;

  explicit TensorT(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_ = std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel(shape_)), T(0));
  }

  TensorT(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    validate_shape();
    if (static_cast<int64_t>(values.size()) != shape_numel(shape_))
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape_));
    data_ = std::make_shared<std::vector<T>>(std::move(values));
  }

  static TensorT full(Shape shape, T value) {
    TensorT t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
  }

  static TensorT scalar_tensor(T value) { return TensorT(Shape{1}, {value}); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  // (C,H,W) accessors; only meaningful for rank-3 tensors.
  int channels() const { assert(rank() == 3); return shape_[0]; }
  int height() const { assert(rank() == 3); return shape_[1]; }
  int width() const { assert(rank() == 3); return shape_[2]; }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }

  /// Storage identity; stable across copies of this tensor.
  const void* key() const { return static_cast<const void*>(data_.get()); }

  T& at(int c, int y, int x) {
    return (*data_)[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  T at(int c, int y, int x) const {
    return (*data_)[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  T scalar() const {
    if (size() != 1) throw ShapeError("scalar() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  TensorT clone() const {
    TensorT t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

private:
  void validate_shape() const {
    if (shape_.empty()) throw ShapeError("tensor: empty shape");
    for (int e : shape_)
      if (e < 1) throw ShapeError("tensor: extent < 1 in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

using Tensor = TensorT<float>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  const T* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(static_cast<double>(p[i]))) return false;
  return true;
}

template <typename T>
void assert_finite(const TensorT<T>& t, const char* what) {
  if (!all_finite(t)) throw ShapeError(std::string("non-finite values in ") + what);
}

/// Geometry of a 2-D convolution. `stride` is the downsampling factor for
/// plain convolution; for the transposed convolution used here it is the
/// upsampling factor instead (the 4x4 / x2 / pad-1 pattern).
struct ConvSpec {
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int pad_h = 1;
  int pad_w = 1;
  int in_channels = 0;
  int out_channels = 0;

  /// "same" padding: pad = kernel/2, preserves extents at stride 1.
  static ConvSpec same(int in_ch, int out_ch, int kernel, int stride = 1) {
    ConvSpec s;
    s.kernel_h = s.kernel_w = kernel;
    s.stride = stride;
    s.pad_h = s.pad_w = kernel / 2;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    return s;
  }

  static ConvSpec upsample2(int channels) {
    ConvSpec s;
    s.kernel_h = s.kernel_w = 4;
    s.stride = 2; // upsampling factor
    s.pad_h = s.pad_w = 1;
    s.in_channels = channels;
    s.out_channels = channels;
    return s;
  }

  int out_extent(int in, int kernel, int pad) const {
    return (in + 2 * pad - kernel) / stride + 1;
  }
  int out_h(int in_h) const { return out_extent(in_h, kernel_h, pad_h); }
  int out_w(int in_w) const { return out_extent(in_w, kernel_w, pad_w); }
};

} // namespace pyraflow
