#include "agssm/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace agssm {

void AslConfig::validate() const {
  if (!(gamma_pos >= 0.0) || !(gamma_neg >= gamma_pos))
    throw std::invalid_argument("AslConfig: want gamma_neg >= gamma_pos >= 0");
  if (!(margin >= 0.0) || !(margin < 1.0))
    throw std::invalid_argument("AslConfig: want margin in [0,1)");
  if (!(clamp_eps > 0.0) || !(clamp_eps < 0.5))
    throw std::invalid_argument("AslConfig: want clamp_eps in (0,0.5)");
  if (num_classes == 0) throw std::invalid_argument("AslConfig: want num_classes >= 1");
}

AslResult asl_loss(const LabelFrame& frame, const AslConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.num_classes;
  if (frame.probs.rank() != 1 || frame.probs.dim(0) != c || !frame.labels.same_shape(frame.probs))
    throw std::invalid_argument("asl_loss: want probs/labels of shape [" + std::to_string(c) +
                                "], got " + frame.probs.shape_str() + " and " +
                                frame.labels.shape_str());

  AslResult out;
  out.grad_wrt_p = Tensor({c});
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    const double y = frame.labels[i];
    if (y != 0.0 && y != 1.0)
      throw std::invalid_argument("asl_loss: labels must be exactly 0 or 1");
    const double raw = frame.probs[i];
    if (!(raw >= 0.0) || !(raw <= 1.0))
      throw std::invalid_argument("asl_loss: probability outside [0,1]");
    const bool clamped = raw < cfg.clamp_eps || raw > 1.0 - cfg.clamp_eps;
    const double p = std::min(std::max(raw, cfg.clamp_eps), 1.0 - cfg.clamp_eps);

    double term = 0.0, dterm = 0.0;  // contribution and its d/dp
    if (y == 1.0) {
      const double focus = std::pow(1.0 - p, cfg.gamma_pos);
      term = focus * std::log(p);
      dterm = focus / p;
      if (cfg.gamma_pos > 0.0)
        dterm -= cfg.gamma_pos * std::pow(1.0 - p, cfg.gamma_pos - 1.0) * std::log(p);
    } else {
      const double pm = p - cfg.margin;
      if (pm > 0.0) {
        const double focus = std::pow(pm, cfg.gamma_neg);
        term = focus * std::log1p(-pm);
        dterm = -focus / (1.0 - pm);
        if (cfg.gamma_neg > 0.0)
          dterm += cfg.gamma_neg * std::pow(pm, cfg.gamma_neg - 1.0) * std::log1p(-pm);
      }
      // pm <= 0: the margin zeroes this class out entirely.
    }
    total += term;
    out.grad_wrt_p[i] = clamped ? 0.0 : -dterm / (double)c;
  }
  out.loss = -total / (double)c;
  if (!std::isfinite(out.loss)) throw std::runtime_error("asl_loss: non-finite loss");
  require_finite(out.grad_wrt_p, "asl_loss gradient");
  return out;
}

F1Result f1_scores(const Tensor& pred_probs, const Tensor& labels, double threshold) {
  if (pred_probs.rank() != 2 || !labels.same_shape(pred_probs))
    throw std::invalid_argument("f1_scores: want matching [frames, C] tensors, got " +
                                pred_probs.shape_str() + " and " + labels.shape_str());
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw std::invalid_argument("f1_scores: threshold must be in (0,1)");
  const std::size_t frames = pred_probs.dim(0), c = pred_probs.dim(1);
  std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < c; ++i) {
      const double y = labels(t, i);
      if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("f1_scores: labels must be exactly 0 or 1");
      const bool pred = pred_probs(t, i) >= threshold;
      if (pred && y == 1.0) ++tp[i];
      else if (pred) ++fp[i];
      else if (y == 1.0) ++fn[i];
    }
  }
  F1Result out;
  out.per_class = Tensor({c});
  for (std::size_t i = 0; i < c; ++i) {
    const std::size_t denom = 2 * tp[i] + fp[i] + fn[i];
    out.per_class[i] = denom == 0 ? 0.0 : 2.0 * (double)tp[i] / (double)denom;
    out.macro += out.per_class[i];
  }
  out.macro /= (double)c;
  return out;
}

}  // namespace agssm
