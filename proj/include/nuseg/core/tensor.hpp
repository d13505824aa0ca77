#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nuseg {

/// Dense row-major tensor. Copying a Tensor copies the handle: both copies
/// alias one buffer. Use clone() for an independent buffer. Activations and
/// images use NCHW order.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) { reset(std::move(shape)); }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  static Tensor from(std::vector<int64_t> shape, const std::vector<T>& values) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(values.size()) != t.numel())
      throw std::invalid_argument("Tensor::from: value count does not match shape");
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return numel_; }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }
  T* begin() { return data_.get(); }
  T* end() { return data_.get() + numel_; }
  const T* begin() const { return data_.get(); }
  const T* end() const { return data_.get() + numel_; }

  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }

  /// NCHW element access; the index pack length must equal ndim().
  template <typename... Ix>
  T& at(Ix... ix) {
    return data_[offset({static_cast<int64_t>(ix)...})];
  }
  template <typename... Ix>
  const T& at(Ix... ix) const {
    return data_[offset({static_cast<int64_t>(ix)...})];
  }

  void fill(T value) { std::fill(begin(), end(), value); }

  Tensor clone() const {
    Tensor t(shape_);
    if (numel_ > 0) std::memcpy(t.data(), data(), sizeof(T) * static_cast<size_t>(numel_));
    return t;
  }

  /// Shares the buffer under a new shape with identical element count.
  Tensor reshaped(std::vector<int64_t> shape) const {
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = count(t.shape_);
    if (t.numel_ != numel_)
      throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ']';
    return os.str();
  }

 private:
  void reset(std::vector<int64_t> shape) {
    shape_ = std::move(shape);
    numel_ = count(shape_);
    if (numel_ < 0) throw std::invalid_argument("Tensor: negative dimension");
    data_ = std::shared_ptr<T[]>(new T[static_cast<size_t>(numel_)]());
  }

  static int64_t count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) return -1;
      n *= d;
    }
    return n;
  }

  int64_t offset(std::initializer_list<int64_t> ix) const {
    int64_t off = 0;
    size_t i = 0;
    for (int64_t v : ix) {
      off = off * shape_[i] + v;
      ++i;
    }
    return off;
  }

  std::vector<int64_t> shape_;
  int64_t numel_ = 0;
  std::shared_ptr<T[]> data_;
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

}  // namespace nuseg
