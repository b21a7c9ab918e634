#include <cmath>
#include <cstddef>
#include <vector>

#include "agssm/optim.hpp"
#include "agssm/rng.hpp"
#include "agssm/tensor.hpp"
#include "doctest.h"

using namespace agssm;

namespace {

struct Slot {
  Tensor w, g;
  ParamRef ref(const char* name) { return {name, &w, &g}; }
};

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("zero gradient with decay shrinks weights by exactly lr*wd") {
  Slot s;
  s.w = Tensor::row({1.0, -2.0, 0.5});
  s.g = Tensor::zeros_like(s.w);
  std::vector<ParamRef> params{s.ref("w")};
  AdamWState st;
  st.init(params);
  AdamWConfig cfg;
  cfg.weight_decay = 1e-4;
  adamw_step(params, st, 0.1, cfg);
  // Decoupled decay: w' = w (1 - lr wd); the adaptive term is 0/(0+eps) = 0.
  CHECK(s.w[0] == doctest::Approx(1.0 * (1.0 - 1e-5)).epsilon(1e-15));
  CHECK(s.w[1] == doctest::Approx(-2.0 * (1.0 - 1e-5)).epsilon(1e-15));
  CHECK(s.w[2] == doctest::Approx(0.5 * (1.0 - 1e-5)).epsilon(1e-15));
}

TEST_CASE("zero gradient and zero decay leaves weights untouched") {
  Slot s;
  s.w = Tensor::row({0.7, -0.1});
  s.g = Tensor::zeros_like(s.w);
  std::vector<ParamRef> params{s.ref("w")};
  AdamWState st;
  st.init(params);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(params, st, 0.5, cfg);
  CHECK(s.w[0] == 0.7);
  CHECK(s.w[1] == -0.1);
}

TEST_CASE("first step moves by about lr against the gradient sign") {
  Slot s;
  s.w = Tensor::row({0.0, 0.0});
  s.g = Tensor::row({3.0, -0.2});
  std::vector<ParamRef> params{s.ref("w")};
  AdamWState st;
  st.init(params);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  const double lr = 0.01;
  adamw_step(params, st, lr, cfg);
  // Bias correction makes m_hat = g, v_hat = g^2 at t=1, so the step is
  // lr * g / (|g| + eps) = lr * sign(g) up to eps.
  CHECK(s.w[0] == doctest::Approx(-lr * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK(s.w[1] == doctest::Approx(lr * 0.2 / (0.2 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("full update formula against a hand-rolled reference") {
  // Two steps with distinct gradients, checked against an independent
  // implementation of the update rule.
  Slot s;
  s.w = Tensor::row({0.5, -1.5, 2.0});
  std::vector<ParamRef> params{s.ref("w")};
  AdamWState st;
  st.init(params);
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  const double lr = 0.02;

  double w[3] = {0.5, -1.5, 2.0};
  double m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  const double g1[3] = {1.0, -2.0, 0.3};
  const double g2[3] = {-0.5, 0.7, 0.0};
  for (int t = 1; t <= 2; ++t) {
    const double* g = t == 1 ? g1 : g2;
    s.g = Tensor::row({g[0], g[1], g[2]});
    adamw_step(params, st, lr, cfg);
    for (int i = 0; i < 3; ++i) {
      w[i] -= lr * cfg.weight_decay * w[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double mh = m[i] / (1.0 - std::pow(cfg.beta1, t));
      double vh = v[i] / (1.0 - std::pow(cfg.beta2, t));
      w[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
      CHECK(s.w[(std::size_t)i] == doctest::Approx(w[i]).epsilon(1e-14));
    }
  }
  CHECK(st.step == 2);
}

TEST_CASE("decay is decoupled, not folded into the gradient") {
  // L2-in-gradient would scale the decay by the adaptive preconditioner;
  // with a huge gradient history the adaptive step is tiny, but the decay
  // must stay exactly lr*wd*w.
  Slot a, b;
  a.w = Tensor::row({1.0});
  a.g = Tensor::row({1000.0});
  b.w = Tensor::row({1.0});
  b.g = Tensor::row({1000.0});
  std::vector<ParamRef> pa{a.ref("w")}, pb{b.ref("w")};
  AdamWState sa, sb;
  sa.init(pa);
  sb.init(pb);
  AdamWConfig with_decay;
  with_decay.weight_decay = 0.5;
  AdamWConfig no_decay;
  no_decay.weight_decay = 0.0;
  adamw_step(pa, sa, 0.1, with_decay);
  adamw_step(pb, sb, 0.1, no_decay);
  // Difference between the two runs is exactly the decay term.
  CHECK(b.w[0] - a.w[0] == doctest::Approx(0.1 * 0.5 * 1.0).epsilon(1e-12));
}

TEST_CASE("non-finite gradients abort with the parameter name") {
  Slot s;
  s.w = Tensor::row({1.0});
  s.g = Tensor::row({std::nan("")});
  std::vector<ParamRef> params{s.ref("bad_tensor")};
  AdamWState st;
  st.init(params);
  AdamWConfig cfg;
  try {
    adamw_step(params, st, 0.1, cfg);
    FAIL("expected a throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("bad_tensor") != std::string::npos);
  }
}

TEST_CASE("lr schedule endpoints and junction") {
  LrSchedule sched;
  sched.warmup_steps = 10;
  sched.total_steps = 110;
  sched.lr_peak = 2e-4;
  sched.lr_min = 2e-6;
  CHECK(lr_at(0, sched) == 0.0);
  CHECK(lr_at(5, sched) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_at(10, sched) == doctest::Approx(2e-4).epsilon(1e-15));
  // Continuity: one step into the cosine is still within one cosine step of
  // the peak.
  double just_after = lr_at(11, sched);
  CHECK(just_after < 2e-4);
  CHECK(just_after > 1.9e-4);
  // Cosine midpoint: halfway through decay -> (peak + min) / 2.
  CHECK(lr_at(60, sched) == doctest::Approx((2e-4 + 2e-6) / 2.0).epsilon(1e-12));
  CHECK(lr_at(110, sched) == doctest::Approx(2e-6).epsilon(1e-15));
  CHECK(lr_at(200, sched) == doctest::Approx(2e-6).epsilon(1e-15));
}

TEST_CASE("swa first update copies, later updates average") {
  Slot s;
  s.w = Tensor::row({2.0, 4.0});
  s.g = Tensor::zeros_like(s.w);
  std::vector<ParamRef> params{s.ref("w")};
  SwaState swa;
  swa.update(params);
  CHECK(swa.n_models == 1);
  CHECK(swa.avg[0][0] == 2.0);  // exact copy, no arithmetic
  CHECK(swa.avg[0][1] == 4.0);
  s.w[0] = 4.0;
  s.w[1] = 0.0;
  swa.update(params);
  CHECK(swa.n_models == 2);
  CHECK(swa.avg[0][0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(swa.avg[0][1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("swa of identical snapshots is that snapshot") {
  Slot s;
  s.w = Tensor::row({0.123456789, -9.0});
  s.g = Tensor::zeros_like(s.w);
  std::vector<ParamRef> params{s.ref("w")};
  SwaState swa;
  for (int k = 0; k < 5; ++k) swa.update(params);
  CHECK(swa.n_models == 5);
  CHECK(swa.avg[0][0] == doctest::Approx(0.123456789).epsilon(1e-15));
  CHECK(swa.avg[0][1] == doctest::Approx(-9.0).epsilon(1e-15));
}

TEST_CASE("swa equals the brute-force mean within 1e-12") {
  Rng rng(55);
  Slot s;
  s.w = Tensor({7});
  s.g = Tensor::zeros_like(s.w);
  std::vector<ParamRef> params{s.ref("w")};
  SwaState swa;
  std::vector<std::vector<double>> snaps;
  for (int k = 0; k < 9; ++k) {
    std::vector<double> snap(7);
    for (std::size_t i = 0; i < 7; ++i) {
      s.w[i] = rng.normal(0.0, 2.0);
      snap[i] = s.w[i];
    }
    snaps.push_back(snap);
    swa.update(params);
  }
  for (std::size_t i = 0; i < 7; ++i) {
    double mean = 0.0;
    for (const auto& snap : snaps) mean += snap[i];
    mean /= (double)snaps.size();
    CHECK(std::fabs(swa.avg[0][i] - mean) < 1e-12);
  }
}

TEST_CASE("global norm and clipping") {
  Slot a, b;
  a.w = Tensor::row({0.0});
  a.g = Tensor::row({3.0});
  b.w = Tensor::row({0.0, 0.0});
  b.g = Tensor::row({0.0, 4.0});
  std::vector<ParamRef> params{a.ref("a"), b.ref("b")};
  CHECK(global_grad_norm(params) == doctest::Approx(5.0).epsilon(1e-15));
  double pre = clip_global_norm(params, 1.0);
  CHECK(pre == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.g[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(b.g[1] == doctest::Approx(0.8).epsilon(1e-12));
  // Below the threshold nothing changes.
  double pre2 = clip_global_norm(params, 10.0);
  CHECK(pre2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.g[0] == doctest::Approx(0.6).epsilon(1e-12));
}

}
