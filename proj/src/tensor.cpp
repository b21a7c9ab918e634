#include "agssm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace agssm {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("Tensor: zero-sized axis");
    if (n > (std::size_t)-1 / d) throw std::invalid_argument("Tensor: shape overflow");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::initializer_list<std::size_t> shape)
    : Tensor(std::vector<std::size_t>(shape)) {}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  Tensor t({values.size()});
  std::size_t i = 0;
  for (double v : values) t[i++] = v;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw std::out_of_range("Tensor::dim: bad axis");
  return shape_[axis];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

void require_finite(const Tensor& t, const char* what) {
  if (!all_finite(t))
    throw std::runtime_error(std::string("non-finite values in ") + what);
}

void require_shape(const Tensor& t, std::vector<std::size_t> shape, const char* what) {
  if (t.shape() != shape) {
    Tensor probe(std::move(shape));
    throw std::invalid_argument(std::string(what) + ": expected shape " + probe.shape_str() +
                                ", got " + t.shape_str());
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " x " +
                                b.shape_str());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  // ikj order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = out.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a[i * k + kk];
      const double* b_row = b.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  require_finite(out, "matmul output");
  return out;
}

Tensor linear(const Tensor& w, const Tensor& x, const Tensor& b) {
  if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0))
    throw std::invalid_argument("linear: incompatible shapes " + w.shape_str() + " x " +
                                x.shape_str());
  const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
  const bool has_bias = b.size() > 0;
  if (has_bias && (b.rank() != 1 || b.dim(0) != out_dim))
    throw std::invalid_argument("linear: bad bias shape " + b.shape_str());
  Tensor y({out_dim});
  for (std::size_t o = 0; o < out_dim; ++o)
    y[o] = dot(w.data() + o * in_dim, x.data(), in_dim) + (has_bias ? b[o] : 0.0);
  require_finite(y, "linear output");
  return y;
}

Tensor linear_rows(const Tensor& w, const Tensor& x, const Tensor& b) {
  if (w.rank() != 2 || x.rank() != 2 || w.dim(1) != x.dim(1))
    throw std::invalid_argument("linear_rows: incompatible shapes " + w.shape_str() + " x " +
                                x.shape_str());
  const std::size_t rows = x.dim(0), out_dim = w.dim(0), in_dim = w.dim(1);
  const bool has_bias = b.size() > 0;
  if (has_bias && (b.rank() != 1 || b.dim(0) != out_dim))
    throw std::invalid_argument("linear_rows: bad bias shape " + b.shape_str());
  Tensor y({rows, out_dim});
  // w is transposed once so the inner accumulation runs stride-1 on both
  // sides; the reduction-free loop order vectorizes where plain dots do not.
  std::vector<double> wt(in_dim * out_dim);
  for (std::size_t o = 0; o < out_dim; ++o)
    for (std::size_t i = 0; i < in_dim; ++i) wt[i * out_dim + o] = w[o * in_dim + i];
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * in_dim;
    double* yr = y.data() + r * out_dim;
    if (has_bias) {
      for (std::size_t o = 0; o < out_dim; ++o) yr[o] = b[o];
    }
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double xi = xr[i];
      const double* wrow = wt.data() + i * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) yr[o] += xi * wrow[o];
    }
  }
  require_finite(y, "linear_rows output");
  return y;
}

void softmax_inplace(double* v, std::size_t n) {
  double mx = v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    sum += v[i];
  }
  for (std::size_t i = 0; i < n; ++i) v[i] /= sum;
}

Tensor softmax(const Tensor& v) {
  if (v.rank() != 1 || v.size() == 0) throw std::invalid_argument("softmax: want non-empty 1-d");
  Tensor out = v;
  softmax_inplace(out.data(), out.size());
  require_finite(out, "softmax output");
  return out;
}

double softplus(double x) {
  // log(1+e^x), stable on both tails.
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("softplus_inverse: want y > 0");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

}  // namespace agssm
