#include "agssm/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace agssm {

GradCheckReport grad_check_directional(const std::function<double(const Tensor&)>& f,
                                       const Tensor& x, const Tensor& analytic_grad,
                                       std::size_t num_dirs, Rng& rng, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  if (num_dirs == 0) throw std::invalid_argument("grad_check: num_dirs must be positive");
  if (!x.same_shape(analytic_grad))
    throw std::invalid_argument("grad_check: gradient shape " + analytic_grad.shape_str() +
                                " does not match input " + x.shape_str());
  require_finite(x, "grad_check input");
  require_finite(analytic_grad, "grad_check analytic gradient");

  const std::size_t n = x.size();
  const double scale = 1.0 / std::sqrt((double)n);
  GradCheckReport report;
  Tensor dir = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::size_t k = 0; k < num_dirs; ++k) {
    double analytic = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dir[i] = rng.uniform() < 0.5 ? -scale : scale;
      analytic += analytic_grad[i] * dir[i];
    }
    for (std::size_t i = 0; i < n; ++i) probe[i] = x[i] + eps * dir[i];
    const double f_hi = f(probe);
    for (std::size_t i = 0; i < n; ++i) probe[i] = x[i] - eps * dir[i];
    const double f_lo = f(probe);
    if (!std::isfinite(f_hi) || !std::isfinite(f_lo))
      throw std::runtime_error("grad_check: non-finite objective during probe");
    const double numeric = (f_hi - f_lo) / (2.0 * eps);
    const double rel =
        std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = k;
      report.analytic_at_worst = analytic;
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

GradCheckReport grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           const Tensor& analytic_grad, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  if (!x.same_shape(analytic_grad))
    throw std::invalid_argument("grad_check: gradient shape " + analytic_grad.shape_str() +
                                " does not match input " + x.shape_str());
  require_finite(x, "grad_check input");
  require_finite(analytic_grad, "grad_check analytic gradient");

  GradCheckReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double f_hi = f(probe);
    probe[i] = saved - eps;
    const double f_lo = f(probe);
    probe[i] = saved;
    if (!std::isfinite(f_hi) || !std::isfinite(f_lo))
      throw std::runtime_error("grad_check: non-finite objective during probe");
    const double numeric = (f_hi - f_lo) / (2.0 * eps);
    const double analytic = analytic_grad[i];
    const double rel =
        std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic;
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

}  // namespace agssm
