#pragma once

// Dense n-d arrays over Eigen storage.
//
// Tensor<T> is a small row-major array type with NCHW conventions: rank-4
// for batches, rank-3 for single images {C,H,W}, rank-2 for matrices and
// rank-1 for vectors. The flat storage is exposed as an Eigen array so
// elementwise work stays expression-based; anything shaped (convolution,
// normalization) goes through explicit loops or Eigen::Map views.

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "picd/rng.hpp"

namespace picd {

template <typename T>
using EArray = Eigen::Array<T, Eigen::Dynamic, 1>;
template <typename T>
using EMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using EVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.setZero(count(shape_));
  }

  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor randn(std::vector<int> shape, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (Eigen::Index i = 0; i < t.data_.size(); ++i)
      t.data_[i] = T(rng.normal()) * stddev;
    return t;
  }

  int rank() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[size_t(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  EArray<T>& flat() { return data_; }
  const EArray<T>& flat() const { return data_; }

  T& operator[](Eigen::Index i) { return data_[i]; }
  T operator[](Eigen::Index i) const { return data_[i]; }

  // {N,C,H,W}
  T& operator()(int n, int c, int h, int w) {
    return data_[((Eigen::Index(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  T operator()(int n, int c, int h, int w) const {
    return data_[((Eigen::Index(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // {C,H,W}
  T& operator()(int c, int h, int w) {
    return data_[(Eigen::Index(c) * shape_[1] + h) * shape_[2] + w];
  }
  T operator()(int c, int h, int w) const {
    return data_[(Eigen::Index(c) * shape_[1] + h) * shape_[2] + w];
  }

  // {H,W} or any rank-2
  T& operator()(int i, int j) { return data_[Eigen::Index(i) * shape_[1] + j]; }
  T operator()(int i, int j) const { return data_[Eigen::Index(i) * shape_[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != data_.size())
      throw std::runtime_error("Tensor: reshape to incompatible size");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  // View of one batch element of a rank-4 tensor as rank-3 (copies).
  Tensor slice(int n) const {
    if (rank() != 4) throw std::runtime_error("Tensor: slice needs rank 4");
    Tensor t({shape_[1], shape_[2], shape_[3]});
    const Eigen::Index stride = t.size();
    t.data_ = data_.segment(Eigen::Index(n) * stride, stride);
    return t;
  }

  // Inverse of slice: write a rank-3 tensor into batch slot n.
  void set_slice(int n, const Tensor& s) {
    const Eigen::Index stride = s.size();
    data_.segment(Eigen::Index(n) * stride, stride) = s.data_;
  }

  std::string shape_str() const {
    std::string s = "{";
    for (size_t i = 0; i < shape_.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape_[i]);
    return s + "}";
  }

 private:
  static Eigen::Index count(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
      if (d < 0) throw std::runtime_error("Tensor: negative dimension");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

  std::vector<int> shape_;
  EArray<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::runtime_error("max_abs_diff: shape mismatch");
  if (a.size() == 0) return T(0);
  return (a.flat() - b.flat()).abs().maxCoeff();
}

// Exact elementwise equality of values. Deliberately not a memcmp: a zero
// produced as -0.0f + 0.0f compares equal to 0.0f but differs in bits, and
// value equality is what the identity-at-init guarantees promise.
template <typename T>
bool all_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!(a[i] == b[i])) return false;
  return true;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return t.flat().isFinite().all();
}

template <typename T>
Tensor<T> clamp01(Tensor<T> t) {
  t.flat() = t.flat().min(T(1)).max(T(0));
  return t;
}

}  // namespace picd
