#include "agssm/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace agssm {

void AdamWState::init(const std::vector<ParamRef>& params) {
  m.clear();
  v.clear();
  step = 0;
  for (const ParamRef& p : params) {
    m.emplace_back(p.param->shape());
    v.emplace_back(p.param->shape());
  }
}

void adamw_step(const std::vector<ParamRef>& params, AdamWState& state, double lr,
                const AdamWConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adamw_step: state not initialized for these params");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, (double)state.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, (double)state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].param;
    const Tensor& g = *params[i].grad;
    if (!w.same_shape(g) || !w.same_shape(state.m[i]))
      throw std::invalid_argument("adamw_step: shape mismatch for " + params[i].name);
    if (!all_finite(g))
      throw std::runtime_error("adamw_step: non-finite gradient in " + params[i].name);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      w[j] -= lr * cfg.weight_decay * w[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.eps);
    }
    require_finite(w, params[i].name.c_str());
  }
}

double lr_at(std::uint64_t step, const LrSchedule& sched) {
  if (sched.total_steps == 0 || sched.warmup_steps >= sched.total_steps)
    throw std::invalid_argument("lr_at: want 0 <= warmup_steps < total_steps");
  if (!(sched.lr_peak > 0.0) || !(sched.lr_min >= 0.0) || sched.lr_min > sched.lr_peak)
    throw std::invalid_argument("lr_at: want 0 <= lr_min <= lr_peak");
  if (step < sched.warmup_steps)
    return sched.lr_peak * (double)step / (double)sched.warmup_steps;
  if (step >= sched.total_steps) return sched.lr_min;
  const double progress =
      (double)(step - sched.warmup_steps) / (double)(sched.total_steps - sched.warmup_steps);
  return sched.lr_min +
         0.5 * (sched.lr_peak - sched.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void SwaState::update(const std::vector<ParamRef>& params) {
  if (n_models == 0) {
    avg.clear();
    for (const ParamRef& p : params) avg.emplace_back(*p.param);
    n_models = 1;
    return;
  }
  if (avg.size() != params.size())
    throw std::invalid_argument("SwaState::update: parameter count changed");
  const double n = (double)n_models;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!avg[i].same_shape(*params[i].param))
      throw std::invalid_argument("SwaState::update: shape mismatch for " + params[i].name);
    for (std::size_t j = 0; j < avg[i].size(); ++j)
      avg[i][j] = (avg[i][j] * n + (*params[i].param)[j]) / (n + 1.0);
  }
  n_models += 1;
}

double global_grad_norm(const std::vector<ParamRef>& params) {
  double sum = 0.0;
  for (const ParamRef& p : params)
    for (std::size_t j = 0; j < p.grad->size(); ++j) sum += (*p.grad)[j] * (*p.grad)[j];
  return std::sqrt(sum);
}

double clip_global_norm(const std::vector<ParamRef>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: want max_norm > 0");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const ParamRef& p : params)
      for (std::size_t j = 0; j < p.grad->size(); ++j) (*p.grad)[j] *= scale;
  }
  return norm;
}

}  // namespace agssm
