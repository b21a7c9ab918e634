#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "agssm/tensor.hpp"

namespace agssm {

// Diagonal continuous-time SSM, one channel:
//   h'(t) = diag(a) h(t) + b x(t),  y(t) = <c, h(t)>,  all entries of a < 0.
struct ContinuousSsm {
  Tensor a_diag;  // [N]
  Tensor b;       // [N]
  Tensor c;       // [N]
  void validate() const;
};

// Discretized parameters for a single timestep.
struct DiscreteStep {
  Tensor a_bar;  // [N]
  Tensor b_bar;  // [N]
  Tensor c;      // [N]
};

// Latent state between steps.
struct ScanState {
  Tensor h;  // [N]
  std::size_t t = 0;
};

// Per-timestep discretized parameters for one channel, time-major [T, N].
struct ScanParams {
  Tensor a_bar;
  Tensor b_bar;
  Tensor c;
  std::size_t seq_len() const { return a_bar.dim(0); }
  std::size_t state_dim() const { return a_bar.dim(1); }
  void validate() const;
};

struct ScanResult {
  Tensor y;        // [T]
  Tensor h_final;  // [N]
};

struct ScanGrads {
  Tensor a_bar;  // [T, N]
  Tensor b_bar;  // [T, N]
  Tensor c;      // [T, N]
  Tensor x;      // [T]
  Tensor h0;     // [N]
};

// phi(z) = (e^z - 1) / z; series branch below kZohSeriesSwitch keeps the
// Delta -> 0 limit exact instead of 0/0.
inline constexpr double kZohSeriesSwitch = 1e-6;
double zoh_phi(double z);
double zoh_phi_grad(double z);  // d phi / d z

// Zero-order hold over one step of length delta > 0:
//   a_bar = exp(delta a),  b_bar = (exp(delta a) - 1) / a * b = delta phi(delta a) b.
void discretize_zoh(const double* a, const double* b, double delta, std::size_t n, double* a_bar,
                    double* b_bar);
std::pair<Tensor, Tensor> discretize_zoh(const Tensor& a_diag, const Tensor& b, double delta);

// Step-major inputs packed into the time-major layout the scans use.
ScanParams pack_steps(const std::vector<DiscreteStep>& steps);

// h_t = a_bar_t * h_{t-1} + b_bar_t x_t,  y_t = <c_t, h_t>.
ScanResult scan_sequential(const ScanParams& p, const Tensor& x, const Tensor& h0);
ScanResult scan_sequential(const std::vector<DiscreteStep>& steps, const Tensor& x,
                           const Tensor& h0);

// Same semantics evaluated in fixed-size chunks with within-chunk products
// precomposed: each state is a_run * carry + h_loc, so only the carry crosses
// seams. chunk = 1 is bitwise-equal to scan_sequential; larger chunks agree
// to fp round-off (well under 1e-6 for contractive a_bar).
ScanResult scan_chunked(const ScanParams& p, const Tensor& x, const Tensor& h0, std::size_t chunk);

// Reverse-mode gradients for scan_sequential given dL/dy; the forward states
// are recomputed internally from the inputs.
ScanGrads scan_backward(const ScanParams& p, const Tensor& x, const Tensor& h0,
                        const Tensor& grad_y);

}  // namespace agssm
