#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agssm/tensor.hpp"

namespace agssm {

// One trainable tensor and its gradient accumulator, both owned elsewhere.
struct ParamRef {
  std::string name;
  Tensor* param = nullptr;
  Tensor* grad = nullptr;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamWState {
  std::vector<Tensor> m, v;  // parallel to the ParamRef order
  std::uint64_t step = 0;
  void init(const std::vector<ParamRef>& params);
};

// Decoupled AdamW: w <- w - lr*wd*w, then the bias-corrected adaptive step
// with eps outside the square root. Non-finite gradients abort with the
// parameter name.
void adamw_step(const std::vector<ParamRef>& params, AdamWState& state, double lr,
                const AdamWConfig& cfg);

struct LrSchedule {
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 0;
  double lr_peak = 2e-4;
  double lr_min = 2e-6;
};

// Linear 0 -> lr_peak over warmup, cosine lr_peak -> lr_min over the rest;
// continuous at the junction, lr_min from total_steps onward.
double lr_at(std::uint64_t step, const LrSchedule& sched);

// Running arithmetic mean of parameter snapshots.
struct SwaState {
  std::vector<Tensor> avg;
  std::uint64_t n_models = 0;
  void update(const std::vector<ParamRef>& params);
};

double global_grad_norm(const std::vector<ParamRef>& params);
// Scales all gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(const std::vector<ParamRef>& params, double max_norm);

}  // namespace agssm
