#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace agssm {

// Dense row-major tensor of doubles. Shapes are fixed at construction;
// every public numeric op checks its output for NaN/Inf and throws instead
// of propagating them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::initializer_list<std::size_t> shape);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }
  static Tensor full(std::vector<std::size_t> shape, double value);
  // 1-d tensor from a literal list, handy in tests.
  static Tensor row(std::initializer_list<double> values);

  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::string shape_str() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // Flat access.
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  // Indexed access; rank is the caller's responsibility, offsets are checked
  // only in debug builds.
  double& operator()(std::size_t i) { return data_[i]; }
  const double& operator()(std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const double& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const double& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(double value);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// a: [m, k], b: [k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);

// y = W x + b over the last axis; w: [out, in], x: [in], b: [out] or empty.
Tensor linear(const Tensor& w, const Tensor& x, const Tensor& b);
// Rows of x: [rows, in] -> [rows, out], same convention.
Tensor linear_rows(const Tensor& w, const Tensor& x, const Tensor& b);

Tensor softmax(const Tensor& v);              // 1-d
void softmax_inplace(double* v, std::size_t n);

double softplus(double x);
double softplus_inverse(double y);  // y > 0
double sigmoid(double x);
double silu(double x);
double silu_grad(double x);

bool all_finite(const Tensor& t);
// Throws std::runtime_error naming `what` if t holds NaN/Inf.
void require_finite(const Tensor& t, const char* what);
void require_shape(const Tensor& t, std::vector<std::size_t> shape, const char* what);

double dot(const double* a, const double* b, std::size_t n);

}  // namespace agssm
