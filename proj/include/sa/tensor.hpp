// Dense row-major tensor of doubles. Minimal by intent: only the shapes and
// operations the SA models need, no general broadcasting.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace sa::nn {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until backward touches this tensor

  Tensor() = default;
  Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
  static Tensor row(std::vector<double> values);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t size(int axis) const;

  double& at(std::initializer_list<int64_t> idx);
  double at(std::initializer_list<int64_t> idx) const;

  void ensure_grad();       // allocate zero grad of matching size
  void zero_grad();
  bool all_finite() const;
  double item() const;      // value of a 1-element tensor

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// Throws std::invalid_argument naming both shapes when they differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

// Throws std::domain_error naming `where` if any entry is NaN/Inf.
void check_finite(const Tensor& t, const std::string& where);

}  // namespace sa::nn
