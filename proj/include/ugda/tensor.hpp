// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ugda {

using Index = Eigen::Index;

/// Shape of a rank-4 NCHW array. Lower-rank data uses size-1 axes:
/// a scalar is (1,1,1,1), a per-channel vector is (1,C,1,1).
struct Shape {
  Index n{0}, c{0}, h{0}, w{0};

  Index count() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

/// Dense rank-4 array in NCHW layout, contiguous row-major storage.
/// Math on the flat data goes through Eigen maps; the class itself only
/// owns memory and indexing.
template <typename Scalar>
class Tensor {
 public:
  using FlatMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstFlatMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), data_(static_cast<std::size_t>(s.count()), Scalar(0)) {}
  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}

  static Tensor scalar(Scalar v) {
    Tensor t(1, 1, 1, 1);
    t.data_[0] = v;
    return t;
  }
  static Tensor full(Shape s, Scalar v) {
    Tensor t(s);
    t.flat().setConstant(v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index h, Index w) {
    return data_[static_cast<std::size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return data_[static_cast<std::size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }

  FlatMap flat() { return FlatMap(data_.data(), size()); }
  ConstFlatMap flat() const { return ConstFlatMap(data_.data(), size()); }

  /// Start of image `n`'s (C,H,W) block.
  Scalar* image_ptr(Index n) { return data_.data() + n * shape_.c * shape_.h * shape_.w; }
  const Scalar* image_ptr(Index n) const { return data_.data() + n * shape_.c * shape_.h * shape_.w; }

  /// Value of a (1,1,1,1) tensor.
  Scalar value() const {
    if (size() != 1) throw std::logic_error("Tensor::value: shape " + shape_.str() + " is not scalar");
    return data_[0];
  }

  void fill(Scalar v) { flat().setConstant(v); }
  void set_zero() { flat().setZero(); }
  void release() {
    shape_ = Shape{};
    data_.clear();
    data_.shrink_to_fit();
  }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (Index i = 0; i < size(); ++i) out.data()[i] = static_cast<T>(data_[i]);
    return out;
  }

 private:
  Shape shape_{};
  std::vector<Scalar> data_;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* where) {
  if (!(a == b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace ugda
