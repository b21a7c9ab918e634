#pragma once

#include <memory>
#include <string>
#include <vector>

#include "agssm/ag_ssm.hpp"
#include "agssm/hga.hpp"
#include "agssm/optim.hpp"
#include "agssm/rng.hpp"
#include "agssm/synth.hpp"
#include "agssm/tensor.hpp"

namespace agssm {

// One sequence in model precision.
struct Sequence {
  Tensor patch_tokens;  // [T, N_v, D_v]
  Tensor landmarks;     // [T, 68, 2]
  Tensor audio_feats;   // [T, D_a]
  Tensor labels;        // [T, C]
  double frame_h = 224.0, frame_w = 224.0;
  std::size_t frames() const { return labels.dim(0); }
  static Sequence from_sample(const synth::SynthSample& s, double frame_h, double frame_w);
};

struct ModelConfig {
  std::string kind = "agssm";  // agssm | framewise
  std::size_t classes = 12;
  std::size_t grid_h = 16, grid_w = 16;
  std::size_t d_v = 64;
  std::size_t d_a = 32;
  std::size_t d_model = 64;
  std::size_t state_dim = 16;
  std::size_t layers = 1;
  std::size_t heads = 8;
  std::size_t mlp_hidden = 64;  // framewise baseline width
  void validate() const;
};

// Whole-sequence classifier: probabilities per frame and class, reverse mode
// via backward() after a forward_train(). Single-threaded use; the sequence
// passed to forward_train must outlive the matching backward call.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual const ModelConfig& config() const = 0;
  virtual Tensor forward(const Sequence& seq) const = 0;    // [T, C] probs
  virtual Tensor forward_train(const Sequence& seq) = 0;    // same, keeps context
  virtual void backward(const Tensor& grad_probs) = 0;      // accumulates grads
  virtual void zero_grads() = 0;
  virtual void collect_params(std::vector<ParamRef>& out) = 0;
};

// kind from cfg; rng drives the deterministic init.
std::unique_ptr<SequenceModel> make_model(const ModelConfig& cfg, const RoiSpec& roi, Rng& rng);

std::size_t total_param_count(const std::vector<ParamRef>& params);

}  // namespace agssm
