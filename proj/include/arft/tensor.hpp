#pragma once

#include <initializer_list>
#include <vector>

#include "arft/common.hpp"

namespace arft {

// Dense row-major tensor of 64-bit floats. Plain value type: copying copies
// the storage. All autograd bookkeeping lives on the Tape, not here.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    std::vector<double> d(shape_numel(s), 0.0);
    return Tensor(std::move(s), std::move(d));
  }

  static Tensor full(Shape s, double v) {
    std::vector<double> d(shape_numel(s), v);
    return Tensor(std::move(s), std::move(d));
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // 2D convenience accessors.
  double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }
  double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
};

}  // namespace arft
