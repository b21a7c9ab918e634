#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "agssm/checkpoint.hpp"
#include "agssm/config.hpp"
#include "agssm/loss.hpp"
#include "agssm/model.hpp"
#include "agssm/synth.hpp"

namespace agssm {

struct TrainConfig {
  std::string model_kind = "agssm";  // agssm | framewise
  std::size_t d_model = 64;
  std::size_t state_dim = 16;
  std::size_t layers = 1;
  std::size_t heads = 8;
  std::size_t mlp_hidden = 64;

  std::string loss = "asl";  // asl | bce | focal
  double gamma_pos = 1.0;
  double gamma_neg = 4.0;
  double margin = 0.05;
  double clamp_eps = 1e-8;
  double focal_gamma = 2.0;

  double lr_peak = 2e-4;
  // Fine-tuning rate for a pretrained backbone. There is none here; the key
  // is accepted so existing configs load unchanged.
  double lr_foundation = 1e-5;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  std::size_t warmup_epochs = 5;
  std::size_t total_epochs = 60;
  std::size_t batch_size = 1;   // sequences per optimizer step
  std::size_t clip_len = 256;   // training/eval crop, leading frames
  std::size_t use_swa = 1;
  std::size_t swa_start_epoch = 56;  // 1-indexed first averaged epoch
  double holdout_fraction = 0.25;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void bind(KvBinder& b);
  void validate() const;
  // Loss switch resolved to ASL parameters: bce = (0,0,0), focal = (g,g,0).
  AslConfig loss_config(std::size_t classes) const;
};

ModelConfig make_model_config(const TrainConfig& t, const synth::SynthConfig& d);

// Deterministic split by sequence index: the trailing fraction is holdout.
void split_indices(std::size_t n, double holdout_fraction, std::vector<std::size_t>& train_idx,
                   std::vector<std::size_t>& holdout_idx);

// Model-precision view of one stored sequence, cropped to clip_len frames.
// zero_audio blanks the audio features, for the modality ablation.
Sequence sequence_from(const synth::Dataset& data, std::size_t idx, std::size_t clip_len,
                       bool zero_audio = false);

struct EvalResult {
  double loss = 0.0;      // mean per-frame loss over the split
  double macro_f1 = 0.0;
  Tensor per_class_f1;    // [C]
  std::size_t frames = 0;
};

EvalResult evaluate_split(const SequenceModel& model, const synth::Dataset& data,
                          const std::vector<std::size_t>& indices, const AslConfig& loss_cfg,
                          std::size_t clip_len, double threshold, bool zero_audio = false);

struct EpochLog {
  std::size_t epoch = 0;  // 1-indexed
  double train_loss = 0.0, train_macro_f1 = 0.0;
  double holdout_loss = 0.0, holdout_macro_f1 = 0.0;
  double lr = 0.0;        // rate of the last optimizer step this epoch
  double grad_norm = 0.0; // pre-clip norm of the last step
};

struct TrainResult {
  std::vector<EpochLog> epochs;  // this run only; resumes omit earlier epochs
  double best_metric = -1.0;
  std::size_t best_epoch = 0;
  std::string last_path, best_path, final_path, metrics_path;
};

struct TrainOptions {
  bool resume = false;
  // Stop after this 1-indexed epoch even if total_epochs is larger; 0 means
  // run to the end. The checkpoint keeps the full schedule so a resumed run
  // is bit-identical to an uninterrupted one.
  std::size_t stop_after_epoch = 0;
  std::ostream* log = nullptr;
};

// Writes last.ckpt, best.ckpt, final.ckpt and metrics.jsonl under out_dir.
TrainResult train(const synth::Dataset& data, const TrainConfig& cfg, const std::string& out_dir,
                  const TrainOptions& opts = {});

// Rebuilds the model a checkpoint was trained with; use_swa loads the
// averaged weights instead of the final ones.
struct LoadedModel {
  TrainConfig train_cfg;
  Checkpoint ckpt;
  std::unique_ptr<SequenceModel> model;
};
LoadedModel load_model(const std::string& ckpt_path, const synth::SynthConfig& data_cfg,
                       bool use_swa);

}  // namespace agssm
