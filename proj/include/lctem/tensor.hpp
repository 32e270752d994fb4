#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "lctem/error.hpp"

namespace lctem {

/// (batch, channels, height, width)
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t size() const { return std::int64_t{n} * c * h * w; }
  std::int64_t plane() const { return std::int64_t{h} * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Dense NCHW tensor, row-major within each plane.
template <typename Scalar>
class Tensor {
 public:
  using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(shape), values_(Buffer::Constant(shape.size(), fill)) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
      throw ShapeError("negative tensor dimension " + shape.str());
  }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return values_.size(); }

  Buffer& values() { return values_; }
  const Buffer& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar* plane(int n, int c) { return data() + (std::int64_t{n} * shape_.c + c) * shape_.plane(); }
  const Scalar* plane(int n, int c) const {
    return data() + (std::int64_t{n} * shape_.c + c) * shape_.plane();
  }

  Scalar& at(int n, int c, int y, int x) { return plane(n, c)[std::int64_t{y} * shape_.w + x]; }
  Scalar at(int n, int c, int y, int x) const {
    return plane(n, c)[std::int64_t{y} * shape_.w + x];
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.values() = values_.template cast<Other>();
    return out;
  }

 private:
  Shape shape_;
  Buffer values_;
};

template <typename Scalar>
void require_shape(const Tensor<Scalar>& t, const Shape& expected, const char* what) {
  if (t.shape() != expected)
    throw ShapeError(std::string(what) + ": expected " + expected.str() + ", got " + t.shape().str());
}

}  // namespace lctem
