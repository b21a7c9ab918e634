#pragma once

#include <cstddef>
#include <functional>

#include "agssm/rng.hpp"

#include "agssm/tensor.hpp"

namespace agssm {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central differences against an analytic gradient:
//   numeric[i] = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps)
//   rel_err[i] = |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// f must be deterministic; non-finite values anywhere are an error.
GradCheckReport grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           const Tensor& analytic_grad, double eps = 1e-5);

// Same comparison along random dense directions v (entries +-1/sqrt(n)):
// <grad, v> against the central difference of f along v. Deep compositions
// have coordinates whose true gradient sits below the rounding floor of f;
// dense directions keep the probe well above it while still touching every
// coordinate. worst_index is the direction number.
GradCheckReport grad_check_directional(const std::function<double(const Tensor&)>& f,
                                       const Tensor& x, const Tensor& analytic_grad,
                                       std::size_t num_dirs, Rng& rng, double eps = 1e-5);

}  // namespace agssm
