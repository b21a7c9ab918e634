#include "agssm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <new>
#include <stdexcept>

#include "agssm/ag_ssm.hpp"
#include "agssm/rng.hpp"
#include "agssm/tensor.hpp"

namespace agssm {

void BenchConfig::validate() const {
  if (lengths.empty()) throw std::invalid_argument("bench: no lengths");
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (lengths[i] <= lengths[i - 1])
      throw std::invalid_argument("bench: lengths must be strictly ascending");
  }
  if (lengths.front() == 0) throw std::invalid_argument("bench: lengths must be positive");
  if (reps == 0) throw std::invalid_argument("bench: reps must be positive");
  if (d_model == 0 || state_dim == 0) throw std::invalid_argument("bench: dims must be positive");
}

namespace {

double now_ms() {
  auto t = std::chrono::steady_clock::now().time_since_epoch();
  return std::chrono::duration<double, std::milli>(t).count();
}

void fill_normal(Tensor& t, Rng& rng) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 0.1);
}

// sink defeats dead-code elimination across reps.
double run_ag_ssm(std::size_t t_len, const BenchConfig& cfg, Rng& rng, double& sink) {
  AgSsmLayerParams p = AgSsmLayerParams::create(cfg.d_model, cfg.state_dim);
  p.init(rng);
  Tensor x_v({t_len, cfg.d_model}), x_a({t_len, cfg.d_model});
  fill_normal(x_v, rng);
  fill_normal(x_a, rng);
  const double t0 = now_ms();
  Tensor y = ag_ssm_forward(p, x_v, x_a);
  const double t1 = now_ms();
  sink += y[y.size() - 1];
  return t1 - t0;
}

// Full self-attention, one head, no T x T materialization: per query row the
// logits live in a length-T buffer.
double run_attention(std::size_t t_len, const BenchConfig& cfg, Rng& rng, double& sink) {
  const std::size_t d = cfg.d_model;
  Tensor x({t_len, d});
  fill_normal(x, rng);
  Tensor w_q({d, d}), w_k({d, d}), w_v({d, d});
  fill_normal(w_q, rng);
  fill_normal(w_k, rng);
  fill_normal(w_v, rng);
  const double t0 = now_ms();
  Tensor q = linear_rows(w_q, x, Tensor());
  Tensor k = linear_rows(w_k, x, Tensor());
  Tensor v = linear_rows(w_v, x, Tensor());
  const double scale = 1.0 / std::sqrt((double)d);
  std::vector<double> logits(t_len);
  std::vector<double> out(d);
  double acc = 0.0;
  for (std::size_t i = 0; i < t_len; ++i) {
    for (std::size_t j = 0; j < t_len; ++j)
      logits[j] = scale * dot(&q(i, 0), &k(j, 0), d);
    softmax_inplace(logits.data(), t_len);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t j = 0; j < t_len; ++j) {
      const double a = logits[j];
      const double* vj = &v(j, 0);
      for (std::size_t c = 0; c < d; ++c) out[c] += a * vj[c];
    }
    acc += out[d - 1];
  }
  const double t1 = now_ms();
  sink += acc;
  return t1 - t0;
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<BenchRow> rows;
  double sink = 0.0;
  const char* ops[] = {"ag_ssm", "attention"};
  for (const char* op : ops) {
    for (std::size_t len : cfg.lengths) {
      BenchRow row;
      row.op = op;
      row.length = len;
      try {
        Rng rng(Rng::derive_seed(cfg.seed, len));
        for (std::size_t r = 0; r < cfg.reps; ++r) {
          const double ms = (op == ops[0]) ? run_ag_ssm(len, cfg, rng, sink)
                                           : run_attention(len, cfg, rng, sink);
          row.times_ms.push_back(ms);
        }
        std::vector<double> sorted = row.times_ms;
        std::sort(sorted.begin(), sorted.end());
        row.median_ms = sorted[sorted.size() / 2];
      } catch (const std::bad_alloc&) {
        row.status = "oom";
        row.times_ms.clear();
        row.median_ms = -1.0;
      }
      rows.push_back(std::move(row));
    }
  }
  if (sink == 0.12345) throw std::logic_error("unreachable");
  return rows;
}

}  // namespace agssm
