#include "agssm/ag_ssm.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace agssm {

namespace {

// phi and phi' evaluated from a precomputed e^z; series branches mirror
// zoh_phi / zoh_phi_grad so forward and backward agree.
double phi_from(double z, double ez) {
  if (std::fabs(z) < kZohSeriesSwitch) return 1.0 + z * (0.5 + z / 6.0);
  return (ez - 1.0) / z;
}

double dphi_from(double z, double ez) {
  if (std::fabs(z) < kZohSeriesSwitch) return 0.5 + z * (1.0 / 3.0 + z / 8.0);
  return (ez * (z - 1.0) + 1.0) / (z * z);
}

void check_layer_inputs(const AgSsmLayerParams& p, const Tensor& x_v, const Tensor& x_a) {
  p.validate();
  if (x_v.rank() != 2 || x_v.dim(1) != p.d_model)
    throw std::invalid_argument("ag_ssm: x_v must be [T," + std::to_string(p.d_model) +
                                "], got " + x_v.shape_str());
  if (!x_a.same_shape(x_v))
    throw std::invalid_argument("ag_ssm: x_a must match x_v, got " + x_a.shape_str());
}

Tensor forward_impl(const AgSsmLayerParams& p, const Tensor& x_v, const Tensor& x_a,
                    AgSsmContext* ctx) {
  check_layer_inputs(p, x_v, x_a);
  const std::size_t t_len = x_v.dim(0), d = p.d_model, n = p.state_dim;

  if (ctx) {
    ctx->x_v = x_v;
    ctx->x_a = x_a;
    ctx->s = Tensor({t_len, d});
    ctx->delta = Tensor({t_len, d});
    ctx->bt = Tensor({t_len, n});
    ctx->ct = Tensor({t_len, n});
    ctx->gate = Tensor({t_len, d});
    ctx->u = Tensor({t_len, d});
    ctx->h = Tensor({t_len, d, n});
    ctx->a_bar = Tensor({t_len, d, n});
    ctx->b_bar = Tensor({t_len, d, n});
  }

  std::vector<double> a(d * n);
  for (std::size_t i = 0; i < d * n; ++i) a[i] = -std::exp(p.a_log[i]);

  Tensor y({t_len, d});
  std::vector<double> z(2 * d), s(d), delta(d), bt(n), ct(n), gate(d), u(d);
  std::vector<double> h(d * n, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* xv = x_v.data() + t * d;
    const double* xa = x_a.data() + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = xv[i];
      z[d + i] = xa[i];
    }
    for (std::size_t i = 0; i < d; ++i)
      s[i] = dot(p.w_s.data() + i * 2 * d, z.data(), 2 * d) + p.b_s[i];
    const double q = dot(p.w_delta.data(), s.data(), d) + p.b_delta[0];
    for (std::size_t i = 0; i < d; ++i) delta[i] = softplus(p.delta_base[i] + q);
    for (std::size_t j = 0; j < n; ++j) {
      bt[j] = dot(p.w_b.data() + j * d, s.data(), d);
      ct[j] = dot(p.w_c.data() + j * d, s.data(), d);
    }
    for (std::size_t i = 0; i < d; ++i) {
      gate[i] = sigmoid(dot(p.w_g.data() + i * d, xa, d));
      u[i] = xv[i] * gate[i];
    }
    for (std::size_t i = 0; i < d; ++i) {
      double* h_row = h.data() + i * n;
      const double* a_row = a.data() + i * n;
      const double dlt = delta[i], ui = u[i];
      for (std::size_t j = 0; j < n; ++j) {
        const double zz = dlt * a_row[j];
        const double ab = std::exp(zz);
        const double bb = dlt * phi_from(zz, ab) * bt[j];
        h_row[j] = ab * h_row[j] + bb * ui;
        if (ctx) {
          ctx->a_bar(t, i, j) = ab;
          ctx->b_bar(t, i, j) = bb;
          ctx->h(t, i, j) = h_row[j];
        }
      }
      y(t, i) = dot(ct.data(), h_row, n);
    }
    if (ctx) {
      for (std::size_t i = 0; i < d; ++i) {
        ctx->s(t, i) = s[i];
        ctx->delta(t, i) = delta[i];
        ctx->gate(t, i) = gate[i];
        ctx->u(t, i) = u[i];
      }
      for (std::size_t j = 0; j < n; ++j) {
        ctx->bt(t, j) = bt[j];
        ctx->ct(t, j) = ct[j];
      }
    }
  }
  require_finite(y, "ag_ssm_forward y");
  return y;
}

}  // namespace

AgSsmLayerParams AgSsmLayerParams::create(std::size_t d_model, std::size_t state_dim) {
  if (d_model == 0 || state_dim == 0)
    throw std::invalid_argument("AgSsmLayerParams: dims must be positive");
  AgSsmLayerParams p;
  p.d_model = d_model;
  p.state_dim = state_dim;
  p.w_s = Tensor({d_model, 2 * d_model});
  p.b_s = Tensor({d_model});
  p.w_delta = Tensor({1, d_model});
  p.b_delta = Tensor({1});
  p.delta_base = Tensor({d_model});
  p.w_b = Tensor({state_dim, d_model});
  p.w_c = Tensor({state_dim, d_model});
  p.w_g = Tensor({d_model, d_model});
  p.a_log = Tensor({d_model, state_dim});
  return p;
}

void AgSsmLayerParams::init(Rng& rng) {
  auto init_linear = [&rng](Tensor& w) {
    const double bound = 1.0 / std::sqrt((double)w.dim(1));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  };
  init_linear(w_s);
  init_linear(w_delta);
  init_linear(w_b);
  init_linear(w_c);
  init_linear(w_g);
  b_s.fill(0.0);
  b_delta.fill(0.0);
  // Step sizes start log-uniform in [1e-3, 1e-1] after softplus, the usual
  // range for selective scans; decay rates ramp -1 .. -N across the state.
  for (std::size_t i = 0; i < d_model; ++i)
    delta_base[i] = softplus_inverse(std::exp(rng.uniform(std::log(1e-3), std::log(1e-1))));
  for (std::size_t i = 0; i < d_model; ++i)
    for (std::size_t j = 0; j < state_dim; ++j) a_log(i, j) = std::log((double)(j + 1));
}

void AgSsmLayerParams::validate() const {
  const std::size_t d = d_model, n = state_dim;
  if (d == 0 || n == 0) throw std::invalid_argument("AgSsmLayerParams: dims must be positive");
  require_shape(w_s, {d, 2 * d}, "w_s");
  require_shape(b_s, {d}, "b_s");
  require_shape(w_delta, {1, d}, "w_delta");
  require_shape(b_delta, {1}, "b_delta");
  require_shape(delta_base, {d}, "delta_base");
  require_shape(w_b, {n, d}, "w_b");
  require_shape(w_c, {n, d}, "w_c");
  require_shape(w_g, {d, d}, "w_g");
  require_shape(a_log, {d, n}, "a_log");
}

Tensor fuse_descriptor(const Tensor& x_v, const Tensor& x_a, const AgSsmLayerParams& p) {
  p.validate();
  const std::size_t d = p.d_model;
  if (x_v.rank() != 1 || x_v.dim(0) != d || !x_a.same_shape(x_v))
    throw std::invalid_argument("fuse_descriptor: want two [D] frames, got " + x_v.shape_str() +
                                " and " + x_a.shape_str());
  std::vector<double> z(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    z[i] = x_v[i];
    z[d + i] = x_a[i];
  }
  Tensor s({d});
  for (std::size_t i = 0; i < d; ++i)
    s[i] = dot(p.w_s.data() + i * 2 * d, z.data(), 2 * d) + p.b_s[i];
  require_finite(s, "fuse_descriptor output");
  return s;
}

StepParams synthesize_params(const Tensor& s, const AgSsmLayerParams& p) {
  p.validate();
  if (s.rank() != 1 || s.dim(0) != p.d_model)
    throw std::invalid_argument("synthesize_params: s must be [D], got " + s.shape_str());
  StepParams out{Tensor({p.d_model}), Tensor({p.state_dim}), Tensor({p.state_dim})};
  const double q = dot(p.w_delta.data(), s.data(), p.d_model) + p.b_delta[0];
  for (std::size_t i = 0; i < p.d_model; ++i) out.delta[i] = softplus(p.delta_base[i] + q);
  for (std::size_t j = 0; j < p.state_dim; ++j) {
    out.b[j] = dot(p.w_b.data() + j * p.d_model, s.data(), p.d_model);
    out.c[j] = dot(p.w_c.data() + j * p.d_model, s.data(), p.d_model);
  }
  require_finite(out.delta, "synthesize_params delta");
  return out;
}

Tensor audio_gate(const Tensor& x_v, const Tensor& x_a, const Tensor& w_g) {
  if (x_v.rank() != 1 || !x_a.same_shape(x_v))
    throw std::invalid_argument("audio_gate: want two [D] frames, got " + x_v.shape_str() +
                                " and " + x_a.shape_str());
  const std::size_t d = x_v.dim(0);
  if (w_g.rank() != 2 || w_g.dim(0) != d || w_g.dim(1) != d)
    throw std::invalid_argument("audio_gate: w_g must be [D,D], got " + w_g.shape_str());
  Tensor out({d});
  for (std::size_t i = 0; i < d; ++i)
    out[i] = x_v[i] * sigmoid(dot(w_g.data() + i * d, x_a.data(), d));
  require_finite(out, "audio_gate output");
  return out;
}

Tensor ag_ssm_forward(const AgSsmLayerParams& p, const Tensor& x_v, const Tensor& x_a) {
  return forward_impl(p, x_v, x_a, nullptr);
}

Tensor ag_ssm_forward_train(const AgSsmLayerParams& p, const Tensor& x_v, const Tensor& x_a,
                            AgSsmContext& ctx) {
  return forward_impl(p, x_v, x_a, &ctx);
}

AgSsmGrads AgSsmGrads::zeros_like(const AgSsmLayerParams& p, std::size_t seq_len) {
  AgSsmGrads g;
  g.w_s = Tensor(p.w_s.shape());
  g.b_s = Tensor(p.b_s.shape());
  g.w_delta = Tensor(p.w_delta.shape());
  g.b_delta = Tensor(p.b_delta.shape());
  g.delta_base = Tensor(p.delta_base.shape());
  g.w_b = Tensor(p.w_b.shape());
  g.w_c = Tensor(p.w_c.shape());
  g.w_g = Tensor(p.w_g.shape());
  g.a_log = Tensor(p.a_log.shape());
  g.x_v = Tensor({seq_len, p.d_model});
  g.x_a = Tensor({seq_len, p.d_model});
  return g;
}

void ag_ssm_backward(const AgSsmLayerParams& p, const AgSsmContext& ctx, const Tensor& grad_y,
                     AgSsmGrads& g) {
  const std::size_t t_len = ctx.x_v.dim(0), d = p.d_model, n = p.state_dim;
  if (!grad_y.same_shape(ctx.x_v))
    throw std::invalid_argument("ag_ssm_backward: grad_y must be [T,D], got " +
                                grad_y.shape_str());
  if (!g.x_v.same_shape(ctx.x_v))
    throw std::invalid_argument("ag_ssm_backward: grads sized for a different sequence");

  std::vector<double> a(d * n);
  for (std::size_t i = 0; i < d * n; ++i) a[i] = -std::exp(p.a_log[i]);

  // lam[i,j] = dL/dh_t[i,j] while walking t backward.
  std::vector<double> lam(d * n, 0.0);
  std::vector<double> dct(n), dbt(n), ddelta(d), du(d), dl(d), dpre(d), ds(d), dz(2 * d);
  for (std::size_t t = t_len; t-- > 0;) {
    const double* xv = ctx.x_v.data() + t * d;
    const double* xa = ctx.x_a.data() + t * d;
    const double* s_t = ctx.s.data() + t * d;
    const double* delta_t = ctx.delta.data() + t * d;
    const double* bt_t = ctx.bt.data() + t * n;
    const double* ct_t = ctx.ct.data() + t * n;
    const double* gate_t = ctx.gate.data() + t * d;
    const double* u_t = ctx.u.data() + t * d;
    const double* h_t = ctx.h.data() + t * d * n;
    const double* h_prev = (t == 0) ? nullptr : ctx.h.data() + (t - 1) * d * n;
    const double* ab_t = ctx.a_bar.data() + t * d * n;
    const double* bb_t = ctx.b_bar.data() + t * d * n;
    const double* gy = grad_y.data() + t * d;

    // Readout y_t[i] = <c_t, h_t[i,:]> feeds both lam and dC.
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += gy[i] * h_t[i * n + j];
      dct[j] = acc;
      dbt[j] = 0.0;
    }

    for (std::size_t i = 0; i < d; ++i) {
      double* lam_row = lam.data() + i * n;
      const double* a_row = a.data() + i * n;
      const double dlt = delta_t[i], ui = u_t[i], gyi = gy[i];
      double ddlt = 0.0, dui = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double l = lam_row[j] + gyi * ct_t[j];
        const double ez = ab_t[i * n + j];
        const double zz = dlt * a_row[j];
        const double phi = phi_from(zz, ez);
        const double dphi = dphi_from(zz, ez);
        const double da_bar = (t == 0) ? 0.0 : l * h_prev[i * n + j];
        const double db_bar = l * ui;
        dui += l * bb_t[i * n + j];
        ddlt += da_bar * a_row[j] * ez + db_bar * bt_t[j] * (phi + zz * dphi);
        g.a_log(i, j) +=
            (da_bar * dlt * ez + db_bar * dlt * dlt * bt_t[j] * dphi) * a_row[j];
        dbt[j] += db_bar * dlt * phi;
        lam_row[j] = l * ez;
      }
      ddelta[i] = ddlt;
      du[i] = dui;
    }

    // Gate: u = x_v * sigmoid(W_g x_a).
    for (std::size_t i = 0; i < d; ++i) {
      g.x_v(t, i) += du[i] * gate_t[i];
      dpre[i] = du[i] * xv[i] * gate_t[i] * (1.0 - gate_t[i]);
    }
    for (std::size_t i = 0; i < d; ++i) {
      double* wg_row = g.w_g.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) wg_row[j] += dpre[i] * xa[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += p.w_g(i, j) * dpre[i];
      g.x_a(t, j) += acc;
    }

    // Step size: delta = softplus(delta_base + q); softplus'(l) = 1 - e^{-delta}.
    double dq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dl[i] = ddelta[i] * (1.0 - std::exp(-delta_t[i]));
      g.delta_base[i] += dl[i];
      dq += dl[i];
    }
    for (std::size_t i = 0; i < d; ++i) g.w_delta(0, i) += dq * s_t[i];
    g.b_delta[0] += dq;

    // ds collects the three synthesized readouts.
    for (std::size_t i = 0; i < d; ++i) ds[i] = dq * p.w_delta(0, i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* wb_row = p.w_b.data() + j * d;
      const double* wc_row = p.w_c.data() + j * d;
      double* gwb_row = g.w_b.data() + j * d;
      double* gwc_row = g.w_c.data() + j * d;
      for (std::size_t i = 0; i < d; ++i) {
        ds[i] += wb_row[i] * dbt[j] + wc_row[i] * dct[j];
        gwb_row[i] += dbt[j] * s_t[i];
        gwc_row[i] += dct[j] * s_t[i];
      }
    }

    // Descriptor: s = W_s [x_v; x_a] + b_s.
    for (std::size_t i = 0; i < d; ++i) {
      double* ws_row = g.w_s.data() + i * 2 * d;
      for (std::size_t j = 0; j < d; ++j) {
        ws_row[j] += ds[i] * xv[j];
        ws_row[d + j] += ds[i] * xa[j];
      }
      g.b_s[i] += ds[i];
    }
    for (std::size_t j = 0; j < 2 * d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += p.w_s(i, j) * ds[i];
      dz[j] = acc;
    }
    for (std::size_t j = 0; j < d; ++j) {
      g.x_v(t, j) += dz[j];
      g.x_a(t, j) += dz[d + j];
    }
  }
  require_finite(g.x_v, "ag_ssm_backward x_v grads");
  require_finite(g.x_a, "ag_ssm_backward x_a grads");
}

}  // namespace agssm
