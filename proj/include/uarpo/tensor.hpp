#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "uarpo/errors.hpp"
#include "uarpo/rng.hpp"

namespace uarpo {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major float32 tensor. Rank 1 or 2 is all the policy needs;
// scalars are rank-1 tensors of size 1.
struct Tensor {
  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, std::vector<float> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    check_invariants();
  }

  static Tensor zeros(Shape s, bool rg = false) {
    auto n = shape_numel(s);
    return Tensor(std::move(s), std::vector<float>(static_cast<size_t>(n), 0.0f), rg);
  }

  static Tensor full(Shape s, float v, bool rg = false) {
    auto n = shape_numel(s);
    return Tensor(std::move(s), std::vector<float>(static_cast<size_t>(n), v), rg);
  }

  static Tensor scalar(float v, bool rg = false) { return Tensor({1}, {v}, rg); }

  static Tensor from(Shape s, std::vector<float> d, bool rg = false) {
    return Tensor(std::move(s), std::move(d), rg);
  }

  // Seeded N(0, std) fill.
  static Tensor randn(Shape s, float stddev, Rng& rng, bool rg = false) {
    Tensor t = zeros(std::move(s), rg);
    for (auto& v : t.data) v = static_cast<float>(rng.normal() * stddev);
    return t;
  }

  void check_invariants() const {
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_str(shape));
    }
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
      throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return numel() == 1; }

  int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 0); }
  int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace uarpo
