#pragma once

#include <cstddef>

#include "agssm/rng.hpp"
#include "agssm/ssm.hpp"
#include "agssm/tensor.hpp"

namespace agssm {

// One selective SSM layer over D channels of expanded width, each carrying an
// N-dimensional diagonal state. The step size, input/output projections and
// the input gate are synthesized per frame from the fused audio-visual
// descriptor, so the transition matrices vary along the sequence.
struct AgSsmLayerParams {
  std::size_t d_model = 0;   // D
  std::size_t state_dim = 0; // N

  Tensor w_s, b_s;    // [D, 2D], [D]   descriptor fusion over [x_v; x_a]
  Tensor w_delta;     // [1, D]         shared step-size readout of s_t
  Tensor b_delta;     // [1]
  Tensor delta_base;  // [D]            per-channel step-size offset
  Tensor w_b;         // [N, D]         input projection B_t
  Tensor w_c;         // [N, D]         output projection C_t
  Tensor w_g;         // [D, D]         audio gate, sigmoid(W_g x_a)
  Tensor a_log;       // [D, N]         state decay, a = -exp(a_log)

  static AgSsmLayerParams create(std::size_t d_model, std::size_t state_dim);
  void init(Rng& rng);
  void validate() const;

  template <typename F>
  void for_each_param(F&& f) {
    f("w_s", w_s);
    f("b_s", b_s);
    f("w_delta", w_delta);
    f("b_delta", b_delta);
    f("delta_base", delta_base);
    f("w_b", w_b);
    f("w_c", w_c);
    f("w_g", w_g);
    f("a_log", a_log);
  }
};

// Per-step synthesized SSM pieces.
struct StepParams {
  Tensor delta;  // [D], positive
  Tensor b;      // [N]
  Tensor c;      // [N]
};

// s_t = W_s [x_v; x_a] + b_s for one frame, visual half first; [D],[D] -> [D].
Tensor fuse_descriptor(const Tensor& x_v, const Tensor& x_a, const AgSsmLayerParams& p);

// delta = softplus(delta_base + <w_delta, s> + b_delta), b = W_b s, c = W_c s.
StepParams synthesize_params(const Tensor& s, const AgSsmLayerParams& p);

// x_v elementwise-scaled by sigmoid(W_g x_a); every output entry is bounded
// by the matching |x_v| entry.
Tensor audio_gate(const Tensor& x_v, const Tensor& x_a, const Tensor& w_g);

// Everything the backward pass needs, captured by the training-mode forward.
struct AgSsmContext {
  Tensor x_v, x_a;        // [T, D]
  Tensor s;               // [T, D]
  Tensor delta;           // [T, D]
  Tensor bt, ct;          // [T, N]
  Tensor gate;            // [T, D]
  Tensor u;               // [T, D]  gated visual input
  Tensor h;               // [T, D, N]
  Tensor a_bar, b_bar;    // [T, D, N]
};

struct AgSsmGrads {
  Tensor w_s, b_s, w_delta, b_delta, delta_base, w_b, w_c, w_g, a_log;
  Tensor x_v, x_a;  // [T, D]
  static AgSsmGrads zeros_like(const AgSsmLayerParams& p, std::size_t seq_len);

  template <typename F>
  void for_each_param(F&& f) {
    f("w_s", w_s);
    f("b_s", b_s);
    f("w_delta", w_delta);
    f("b_delta", b_delta);
    f("delta_base", delta_base);
    f("w_b", w_b);
    f("w_c", w_c);
    f("w_g", w_g);
    f("a_log", a_log);
  }
};

// Whole-sequence forward, streaming (no per-step context kept). Returns
// y: [T, D]. Strictly causal: y_t depends on frames 0..t only.
Tensor ag_ssm_forward(const AgSsmLayerParams& p, const Tensor& x_v, const Tensor& x_a);

// Same outputs, but fills ctx for ag_ssm_backward.
Tensor ag_ssm_forward_train(const AgSsmLayerParams& p, const Tensor& x_v, const Tensor& x_a,
                            AgSsmContext& ctx);

// Reverse mode through the scan, the ZOH discretization and all parameter
// synthesis; accumulates into g.
void ag_ssm_backward(const AgSsmLayerParams& p, const AgSsmContext& ctx, const Tensor& grad_y,
                     AgSsmGrads& g);

}  // namespace agssm
