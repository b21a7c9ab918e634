#pragma once

#include <cstddef>

#include "agssm/tensor.hpp"

namespace agssm {

// Asymmetric multi-label loss. gamma_pos/gamma_neg are the focusing powers
// for positive/negative terms; margin shifts negatives so easy ones
// contribute exactly nothing. gamma=0, margin=0 recovers BCE.
struct AslConfig {
  double gamma_pos = 1.0;
  double gamma_neg = 4.0;
  double margin = 0.05;
  double clamp_eps = 1e-8;
  std::size_t num_classes = 12;
  void validate() const;
};

// One frame of per-class probabilities and binary labels.
struct LabelFrame {
  Tensor probs;   // [C] in [0,1]
  Tensor labels;  // [C] in {0,1}
};

struct AslResult {
  double loss = 0.0;     // >= 0
  Tensor grad_wrt_p;     // [C]
};

// loss = -(1/C) sum_i [ y_i (1-p)^g+ log p + (1-y_i) p_m^g- log(1-p_m) ],
// p_m = max(p - margin, 0). Probabilities are clamped to
// [clamp_eps, 1-clamp_eps] before any log; the gradient takes the
// subgradient 0 at the p = margin kink and at the clamp boundaries.
AslResult asl_loss(const LabelFrame& frame, const AslConfig& cfg);

struct F1Result {
  Tensor per_class;  // [C]
  double macro = 0.0;
};

// Binarize at p >= threshold; per-class F1 = 2TP/(2TP+FP+FN), 0 when the
// denominator is 0; macro is the unweighted mean.
F1Result f1_scores(const Tensor& pred_probs, const Tensor& labels, double threshold = 0.5);

}  // namespace agssm
