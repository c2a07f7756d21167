#include "sa/tensor.hpp"

#include <sstream>

namespace sa::nn {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
}

Tensor Tensor::row(std::vector<double> values) {
  Shape s{static_cast<int64_t>(values.size())};
  return Tensor(std::move(s), std::move(values));
}

int64_t Tensor::size(int axis) const {
  if (axis < 0) axis += ndim();
  if (axis < 0 || axis >= ndim())
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  return shape[static_cast<size_t>(axis)];
}

static int64_t flat_index(const Shape& shape, std::initializer_list<int64_t> idx) {
  if (idx.size() != shape.size())
    throw std::invalid_argument("index rank " + std::to_string(idx.size()) + " vs shape " + shape_str(shape));
  int64_t flat = 0;
  size_t k = 0;
  for (int64_t i : idx) {
    if (i < 0 || i >= shape[k])
      throw std::out_of_range("index " + std::to_string(i) + " out of range for shape " + shape_str(shape));
    flat = flat * shape[k] + i;
    ++k;
  }
  return flat;
}

double& Tensor::at(std::initializer_list<int64_t> idx) { return data[static_cast<size_t>(flat_index(shape, idx))]; }
double Tensor::at(std::initializer_list<int64_t> idx) const {
  return data[static_cast<size_t>(flat_index(shape, idx))];
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
}

void check_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) throw std::domain_error(where + ": non-finite value encountered");
}

}  // namespace sa::nn
