#include "agssm/ssm.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace agssm {

void ContinuousSsm::validate() const {
  if (a_diag.rank() != 1 || !b.same_shape(a_diag) || !c.same_shape(a_diag))
    throw std::invalid_argument("ContinuousSsm: a_diag/b/c must share a 1-d shape");
  for (std::size_t i = 0; i < a_diag.size(); ++i)
    if (!(a_diag[i] < 0.0))
      throw std::invalid_argument("ContinuousSsm: a_diag entries must be negative");
}

void ScanParams::validate() const {
  if (a_bar.rank() != 2 || !b_bar.same_shape(a_bar) || !c.same_shape(a_bar))
    throw std::invalid_argument("ScanParams: a_bar/b_bar/c must share a [T,N] shape");
}

double zoh_phi(double z) {
  if (std::fabs(z) < kZohSeriesSwitch) return 1.0 + z * (0.5 + z / 6.0);
  return std::expm1(z) / z;
}

double zoh_phi_grad(double z) {
  // d/dz (e^z - 1)/z = (e^z (z - 1) + 1) / z^2; series: 1/2 + z/3 + z^2/8.
  if (std::fabs(z) < kZohSeriesSwitch) return 0.5 + z * (1.0 / 3.0 + z / 8.0);
  return (std::exp(z) * (z - 1.0) + 1.0) / (z * z);
}

void discretize_zoh(const double* a, const double* b, double delta, std::size_t n, double* a_bar,
                    double* b_bar) {
  if (!(delta > 0.0)) throw std::invalid_argument("discretize_zoh: delta must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    const double z = delta * a[i];
    a_bar[i] = std::exp(z);
    b_bar[i] = delta * zoh_phi(z) * b[i];
  }
}

std::pair<Tensor, Tensor> discretize_zoh(const Tensor& a_diag, const Tensor& b, double delta) {
  if (a_diag.rank() != 1 || !b.same_shape(a_diag))
    throw std::invalid_argument("discretize_zoh: a_diag/b must share a 1-d shape");
  Tensor a_bar({a_diag.size()}), b_bar({a_diag.size()});
  discretize_zoh(a_diag.data(), b.data(), delta, a_diag.size(), a_bar.data(), b_bar.data());
  require_finite(a_bar, "discretize_zoh a_bar");
  require_finite(b_bar, "discretize_zoh b_bar");
  return {std::move(a_bar), std::move(b_bar)};
}

namespace {

void check_scan_inputs(const ScanParams& p, const Tensor& x, const Tensor& h0) {
  p.validate();
  if (x.rank() != 1 || x.dim(0) != p.seq_len())
    throw std::invalid_argument("scan: x must be [T], got " + x.shape_str());
  if (h0.rank() != 1 || h0.dim(0) != p.state_dim())
    throw std::invalid_argument("scan: h0 must be [N], got " + h0.shape_str());
}

}  // namespace

ScanParams pack_steps(const std::vector<DiscreteStep>& steps) {
  if (steps.empty()) throw std::invalid_argument("pack_steps: empty step list");
  const std::size_t t_len = steps.size(), n = steps[0].a_bar.size();
  ScanParams p{Tensor({t_len, n}), Tensor({t_len, n}), Tensor({t_len, n})};
  for (std::size_t t = 0; t < t_len; ++t) {
    const DiscreteStep& s = steps[t];
    if (s.a_bar.size() != n || s.b_bar.size() != n || s.c.size() != n)
      throw std::invalid_argument("pack_steps: inconsistent state dims");
    for (std::size_t i = 0; i < n; ++i) {
      p.a_bar(t, i) = s.a_bar[i];
      p.b_bar(t, i) = s.b_bar[i];
      p.c(t, i) = s.c[i];
    }
  }
  return p;
}

ScanResult scan_sequential(const std::vector<DiscreteStep>& steps, const Tensor& x,
                           const Tensor& h0) {
  return scan_sequential(pack_steps(steps), x, h0);
}

ScanResult scan_sequential(const ScanParams& p, const Tensor& x, const Tensor& h0) {
  check_scan_inputs(p, x, h0);
  const std::size_t t_len = p.seq_len(), n = p.state_dim();
  ScanResult out{Tensor({t_len}), h0};
  double* h = out.h_final.data();
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* ab = p.a_bar.data() + t * n;
    const double* bb = p.b_bar.data() + t * n;
    const double xt = x[t];
    for (std::size_t i = 0; i < n; ++i) h[i] = ab[i] * h[i] + bb[i] * xt;
    out.y[t] = dot(p.c.data() + t * n, h, n);
  }
  require_finite(out.y, "scan_sequential y");
  return out;
}

ScanResult scan_chunked(const ScanParams& p, const Tensor& x, const Tensor& h0,
                        std::size_t chunk) {
  check_scan_inputs(p, x, h0);
  if (chunk == 0) throw std::invalid_argument("scan_chunked: chunk must be positive");
  const std::size_t t_len = p.seq_len(), n = p.state_dim();
  ScanResult out{Tensor({t_len}), h0};
  double* carry = out.h_final.data();
  // Within a chunk the affine maps h -> a_bar h + b_bar x are composed from a
  // zero local state plus a running product of a_bar; each step's full state
  // is a_run * carry + h_loc, and only the carry crosses chunk seams.
  std::vector<double> a_run(n), h_loc(n), h_t(n);
  for (std::size_t t0 = 0; t0 < t_len; t0 += chunk) {
    const std::size_t t1 = std::min(t0 + chunk, t_len);
    for (std::size_t i = 0; i < n; ++i) {
      a_run[i] = 1.0;
      h_loc[i] = 0.0;
    }
    for (std::size_t t = t0; t < t1; ++t) {
      const double* ab = p.a_bar.data() + t * n;
      const double* bb = p.b_bar.data() + t * n;
      const double xt = x[t];
      for (std::size_t i = 0; i < n; ++i) {
        h_loc[i] = ab[i] * h_loc[i] + bb[i] * xt;
        a_run[i] *= ab[i];
        h_t[i] = a_run[i] * carry[i] + h_loc[i];
      }
      out.y[t] = dot(p.c.data() + t * n, h_t.data(), n);
    }
    for (std::size_t i = 0; i < n; ++i) carry[i] = h_t[i];
  }
  require_finite(out.y, "scan_chunked y");
  return out;
}

ScanGrads scan_backward(const ScanParams& p, const Tensor& x, const Tensor& h0,
                        const Tensor& grad_y) {
  check_scan_inputs(p, x, h0);
  if (!grad_y.same_shape(x))
    throw std::invalid_argument("scan_backward: grad_y must match x, got " + grad_y.shape_str());
  const std::size_t t_len = p.seq_len(), n = p.state_dim();

  // Recompute the state trajectory; the scan itself is cheap relative to the
  // surrounding layers.
  Tensor h_all({t_len, n});
  {
    std::vector<double> h(h0.data(), h0.data() + n);
    for (std::size_t t = 0; t < t_len; ++t) {
      const double* ab = p.a_bar.data() + t * n;
      const double* bb = p.b_bar.data() + t * n;
      const double xt = x[t];
      for (std::size_t i = 0; i < n; ++i) h[i] = ab[i] * h[i] + bb[i] * xt;
      for (std::size_t i = 0; i < n; ++i) h_all(t, i) = h[i];
    }
  }

  ScanGrads g{Tensor({t_len, n}), Tensor({t_len, n}), Tensor({t_len, n}), Tensor({t_len}),
              Tensor({n})};
  // lam carries dL/dh_t; the recurrence h_t = a_bar h_{t-1} + ... sends it
  // backward scaled by a_bar.
  std::vector<double> lam(n, 0.0);
  for (std::size_t t = t_len; t-- > 0;) {
    const double* ab = p.a_bar.data() + t * n;
    const double* bb = p.b_bar.data() + t * n;
    const double* ct = p.c.data() + t * n;
    const double* h_prev = (t == 0) ? h0.data() : h_all.data() + (t - 1) * n;
    const double gy = grad_y[t];
    double gx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      lam[i] += gy * ct[i];
      g.c(t, i) = gy * h_all(t, i);
      g.a_bar(t, i) = lam[i] * h_prev[i];
      g.b_bar(t, i) = lam[i] * x[t];
      gx += lam[i] * bb[i];
      lam[i] *= ab[i];
    }
    g.x[t] = gx;
  }
  for (std::size_t i = 0; i < n; ++i) g.h0[i] = lam[i];
  require_finite(g.x, "scan_backward x grads");
  return g;
}

}  // namespace agssm
