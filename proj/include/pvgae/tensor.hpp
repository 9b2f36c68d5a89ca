#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pvgae/error.hpp"

namespace pvgae {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily by the tape
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats. Copies are shallow: two Tensor
// handles may share storage, which is how optimizer updates reach the model.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double fill, bool requires_grad = false) {
    return Tensor(std::move(shape), fill, requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("Tensor::from: shape " + shape_str(shape) +
                           " does not match " + std::to_string(values.size()) +
                           " values");
    }
    Tensor t;
    t.data_ = std::make_shared<detail::TensorData>();
    t.data_->shape = std::move(shape);
    t.data_->value = std::move(values);
    t.data_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1, 1}, {v}, requires_grad);
  }

  bool defined() const { return data_ != nullptr; }

  const Shape& shape() const { return check().shape; }
  std::size_t ndim() const { return check().shape.size(); }
  std::size_t size() const { return check().value.size(); }

  std::size_t rows() const {
    require_2d("rows");
    return check().shape[0];
  }
  std::size_t cols() const {
    require_2d("cols");
    return check().shape[1];
  }

  bool is_scalar() const { return defined() && size() == 1; }

  // Scalar payload; contract error on anything larger.
  double value() const {
    if (!is_scalar()) {
      throw ContractError("Tensor::value: tensor of shape " +
                          shape_str(shape()) + " is not a scalar");
    }
    return check().value[0];
  }

  double& at(std::size_t r, std::size_t c) {
    require_2d("at");
    return check().value[r * check().shape[1] + c];
  }
  double at(std::size_t r, std::size_t c) const {
    require_2d("at");
    return check().value[r * check().shape[1] + c];
  }

  double& operator[](std::size_t i) { return check().value[i]; }
  double operator[](std::size_t i) const { return check().value[i]; }

  std::span<double> data() { return check().value; }
  std::span<const double> data() const { return check().value; }

  bool requires_grad() const { return defined() && data_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    check().requires_grad = rg;
    return *this;
  }

  // Gradient accumulated by the most recent backward pass; zeros if this
  // tensor was unreachable from the loss.
  Tensor grad() const {
    const auto& d = check();
    if (d.grad.size() == d.value.size()) {
      return Tensor::from(d.shape, d.grad);
    }
    return Tensor::zeros(d.shape);
  }

  // Deep copy that drops tape participation.
  Tensor detached() const {
    const auto& d = check();
    return Tensor::from(d.shape, d.value, false);
  }

  // Deep copy preserving requires_grad.
  Tensor clone() const {
    const auto& d = check();
    return Tensor::from(d.shape, d.value, d.requires_grad);
  }

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

  std::shared_ptr<detail::TensorData> impl() const { return data_; }

 private:
  Tensor(Shape shape, double fill, bool requires_grad) {
    data_ = std::make_shared<detail::TensorData>();
    data_->value.assign(shape_size(shape), fill);
    data_->shape = std::move(shape);
    data_->requires_grad = requires_grad;
  }

  detail::TensorData& check() const {
    if (!data_) throw ContractError("operation on an empty Tensor");
    return *data_;
  }

  void require_2d(const char* what) const {
    if (check().shape.size() != 2) {
      throw DimensionError(std::string("Tensor::") + what +
                           ": expected a 2-d tensor, got " +
                           shape_str(check().shape));
    }
  }

  std::shared_ptr<detail::TensorData> data_;
};

inline bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void check_finite(const Tensor& t, const char* op) {
  if (!all_finite(t)) {
    throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: shapes " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace pvgae
