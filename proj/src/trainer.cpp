#include "agssm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "agssm/optim.hpp"
#include "agssm/rng.hpp"

namespace agssm {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::bind(KvBinder& b) {
  b.field("model_kind", model_kind);
  b.field("d_model", d_model);
  b.field("state_dim", state_dim);
  b.field("layers", layers);
  b.field("heads", heads);
  b.field("mlp_hidden", mlp_hidden);
  b.field("loss", loss);
  b.field("gamma_pos", gamma_pos);
  b.field("gamma_neg", gamma_neg);
  b.field("margin", margin);
  b.field("clamp_eps", clamp_eps);
  b.field("focal_gamma", focal_gamma);
  b.field("lr_peak", lr_peak);
  b.field("lr_foundation", lr_foundation);
  b.field("weight_decay", weight_decay);
  b.field("grad_clip", grad_clip);
  b.field("warmup_epochs", warmup_epochs);
  b.field("total_epochs", total_epochs);
  b.field("batch_size", batch_size);
  b.field("clip_len", clip_len);
  b.field("use_swa", use_swa);
  b.field("swa_start_epoch", swa_start_epoch);
  b.field("holdout_fraction", holdout_fraction);
  b.field("threshold", threshold);
  b.field("seed", seed);
}

void TrainConfig::validate() const {
  if (model_kind != "agssm" && model_kind != "framewise")
    throw std::invalid_argument("model_kind must be agssm or framewise");
  if (loss != "asl" && loss != "bce" && loss != "focal")
    throw std::invalid_argument("loss must be asl, bce or focal");
  if (total_epochs == 0) throw std::invalid_argument("total_epochs must be positive");
  if (warmup_epochs >= total_epochs)
    throw std::invalid_argument("warmup_epochs must be below total_epochs");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr_peak > 0.0)) throw std::invalid_argument("lr_peak must be positive");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(holdout_fraction >= 0.0) || holdout_fraction >= 1.0)
    throw std::invalid_argument("holdout_fraction must be in [0, 1)");
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw std::invalid_argument("threshold must be in (0, 1)");
  if (swa_start_epoch == 0) throw std::invalid_argument("swa_start_epoch is 1-indexed");
  if (!(gamma_pos >= 0.0) || !(gamma_neg >= 0.0) || !(focal_gamma >= 0.0))
    throw std::invalid_argument("focusing powers must be >= 0");
  if (!(margin >= 0.0) || margin >= 1.0) throw std::invalid_argument("margin must be in [0, 1)");
}

AslConfig TrainConfig::loss_config(std::size_t classes) const {
  AslConfig lc;
  lc.clamp_eps = clamp_eps;
  lc.num_classes = classes;
  if (loss == "asl") {
    lc.gamma_pos = gamma_pos;
    lc.gamma_neg = gamma_neg;
    lc.margin = margin;
  } else if (loss == "focal") {
    lc.gamma_pos = focal_gamma;
    lc.gamma_neg = focal_gamma;
    lc.margin = 0.0;
  } else if (loss == "bce") {
    lc.gamma_pos = 0.0;
    lc.gamma_neg = 0.0;
    lc.margin = 0.0;
  } else {
    throw std::invalid_argument("loss must be asl, bce or focal, got " + loss);
  }
  lc.validate();
  return lc;
}

ModelConfig make_model_config(const TrainConfig& t, const synth::SynthConfig& d) {
  ModelConfig mc;
  mc.kind = t.model_kind;
  mc.classes = d.classes;
  mc.grid_h = d.grid_h;
  mc.grid_w = d.grid_w;
  mc.d_v = d.d_v;
  mc.d_a = d.d_a;
  mc.d_model = t.d_model;
  mc.state_dim = t.state_dim;
  mc.layers = t.layers;
  mc.heads = t.heads;
  mc.mlp_hidden = t.mlp_hidden;
  mc.validate();
  return mc;
}

void split_indices(std::size_t n, double holdout_fraction, std::vector<std::size_t>& train_idx,
                   std::vector<std::size_t>& holdout_idx) {
  train_idx.clear();
  holdout_idx.clear();
  std::size_t n_hold = (std::size_t)std::llround(holdout_fraction * (double)n);
  if (holdout_fraction > 0.0 && n > 1 && n_hold == 0) n_hold = 1;
  if (n_hold >= n && n > 0) n_hold = n - 1;
  for (std::size_t i = 0; i < n - n_hold; ++i) train_idx.push_back(i);
  for (std::size_t i = n - n_hold; i < n; ++i) holdout_idx.push_back(i);
}

Sequence sequence_from(const synth::Dataset& data, std::size_t idx, std::size_t clip_len,
                       bool zero_audio) {
  const synth::SynthSample& s = data.samples.at(idx);
  const std::size_t t_full = s.labels.shape.at(0);
  const std::size_t t_use = clip_len == 0 ? t_full : std::min(t_full, clip_len);
  auto crop = [&](const synth::F32Tensor& f) {
    std::vector<std::size_t> sh = f.shape;
    const std::size_t per_frame = f.size() / sh.at(0);
    sh[0] = t_use;
    Tensor out(sh);
    for (std::size_t i = 0; i < t_use * per_frame; ++i) out[i] = (double)f.data[i];
    return out;
  };
  Sequence q;
  q.patch_tokens = crop(s.patch_tokens);
  q.landmarks = crop(s.landmarks);
  q.audio_feats = crop(s.audio_feats);
  q.labels = crop(s.labels);
  if (zero_audio) q.audio_feats.fill(0.0);
  q.frame_h = data.config.frame_h;
  q.frame_w = data.config.frame_w;
  return q;
}

namespace {

// Frame-wise loss over one already-computed probability sheet; grad is
// left unscaled (per frame mean over classes).
double frame_losses(const Tensor& probs, const Tensor& labels, const AslConfig& lc,
                    Tensor* grad_probs) {
  const std::size_t t_len = probs.dim(0), c = probs.dim(1);
  LabelFrame f;
  f.probs = Tensor({c});
  f.labels = Tensor({c});
  double sum = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < c; ++j) {
      f.probs[j] = probs(t, j);
      f.labels[j] = labels(t, j);
    }
    AslResult r = asl_loss(f, lc);
    sum += r.loss;
    if (grad_probs != nullptr)
      for (std::size_t j = 0; j < c; ++j) (*grad_probs)(t, j) = r.grad_wrt_p[j];
  }
  return sum;
}

Checkpoint snapshot(const std::string& cfg_text, const std::vector<ParamRef>& params,
                    const AdamWState& adam, const SwaState& swa, const Rng& rng,
                    std::size_t epochs_done, double best_metric, std::size_t best_epoch) {
  Checkpoint c;
  c.config_text = cfg_text;
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.names.push_back(params[i].name);
    c.params.push_back(*params[i].param);
    c.adam_m.push_back(adam.m[i]);
    c.adam_v.push_back(adam.v[i]);
  }
  c.adam_step = adam.step;
  c.swa_avg = swa.avg;
  c.swa_n_models = swa.n_models;
  c.rng_state = rng.save_state();
  c.epochs_done = epochs_done;
  c.best_metric = best_metric;
  c.best_epoch = best_epoch;
  return c;
}

void copy_named_tensors(const std::vector<std::string>& names, const std::vector<Tensor>& src,
                        const std::vector<ParamRef>& params, const char* what) {
  if (names.size() != params.size() || src.size() != params.size())
    throw std::runtime_error(std::string(what) + ": parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i] != params[i].name)
      throw std::runtime_error(std::string(what) + ": parameter order mismatch at " + names[i]);
    if (!src[i].same_shape(*params[i].param))
      throw std::runtime_error(std::string(what) + ": shape mismatch for " + names[i]);
    *params[i].param = src[i];
  }
}

}  // namespace

EvalResult evaluate_split(const SequenceModel& model, const synth::Dataset& data,
                          const std::vector<std::size_t>& indices, const AslConfig& loss_cfg,
                          std::size_t clip_len, double threshold, bool zero_audio) {
  if (indices.empty()) throw std::invalid_argument("evaluate_split: empty index set");
  const std::size_t c = loss_cfg.num_classes;
  std::size_t total = 0;
  for (std::size_t idx : indices) {
    const std::size_t t_full = data.samples.at(idx).labels.shape.at(0);
    total += clip_len == 0 ? t_full : std::min(t_full, clip_len);
  }
  Tensor all_probs({total, c}), all_labels({total, c});
  double loss_sum = 0.0;
  std::size_t off = 0;
  for (std::size_t idx : indices) {
    Sequence s = sequence_from(data, idx, clip_len, zero_audio);
    Tensor probs = model.forward(s);
    loss_sum += frame_losses(probs, s.labels, loss_cfg, nullptr);
    for (std::size_t t = 0; t < s.frames(); ++t) {
      for (std::size_t j = 0; j < c; ++j) {
        all_probs(off, j) = probs(t, j);
        all_labels(off, j) = s.labels(t, j);
      }
      ++off;
    }
  }
  F1Result f1 = f1_scores(all_probs, all_labels, threshold);
  EvalResult r;
  r.loss = loss_sum / (double)total;
  r.macro_f1 = f1.macro;
  r.per_class_f1 = f1.per_class;
  r.frames = total;
  return r;
}

TrainResult train(const synth::Dataset& data, const TrainConfig& cfg, const std::string& out_dir,
                  const TrainOptions& opts) {
  cfg.validate();
  data.config.validate();
  if (data.samples.empty()) throw std::invalid_argument("train: empty dataset");
  fs::create_directories(out_dir);

  const ModelConfig mc = make_model_config(cfg, data.config);
  const AslConfig lc = cfg.loss_config(data.config.classes);
  const std::string cfg_text = dump_config(cfg);

  Rng rng(cfg.seed);
  auto model = make_model(mc, RoiSpec::default_face68(), rng);
  std::vector<ParamRef> params;
  model->collect_params(params);

  AdamWConfig acfg;
  acfg.weight_decay = cfg.weight_decay;
  AdamWState adam;
  adam.init(params);
  SwaState swa;

  std::vector<std::size_t> tr, ho;
  split_indices(data.samples.size(), cfg.holdout_fraction, tr, ho);
  const std::size_t steps_per_epoch = (tr.size() + cfg.batch_size - 1) / cfg.batch_size;
  LrSchedule sched;
  sched.warmup_steps = cfg.warmup_epochs * steps_per_epoch;
  sched.total_steps = cfg.total_epochs * steps_per_epoch;
  sched.lr_peak = cfg.lr_peak;
  sched.lr_min = cfg.lr_peak / 100.0;

  TrainResult res;
  res.last_path = out_dir + "/last.ckpt";
  res.best_path = out_dir + "/best.ckpt";
  res.final_path = out_dir + "/final.ckpt";
  res.metrics_path = out_dir + "/metrics.jsonl";

  std::size_t epochs_done = 0;
  double best = -1.0;
  std::size_t best_epoch = 0;
  if (opts.resume) {
    Checkpoint c = load_checkpoint(res.last_path);
    if (c.config_text != cfg_text)
      throw std::runtime_error("resume: config does not match the checkpoint");
    copy_named_tensors(c.names, c.params, params, "resume");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!c.adam_m[i].same_shape(*params[i].param) || !c.adam_v[i].same_shape(*params[i].param))
        throw std::runtime_error("resume: optimizer state shape mismatch");
    }
    adam.m = c.adam_m;
    adam.v = c.adam_v;
    adam.step = c.adam_step;
    swa.avg = c.swa_avg;
    swa.n_models = c.swa_n_models;
    rng.load_state(c.rng_state);
    epochs_done = c.epochs_done;
    best = c.best_metric;
    best_epoch = c.best_epoch;
    if (epochs_done > cfg.total_epochs)
      throw std::runtime_error("resume: checkpoint is past total_epochs");
  }

  std::ofstream metrics(res.metrics_path,
                        opts.resume ? (std::ios::out | std::ios::app) : std::ios::out);
  if (!metrics) throw std::runtime_error("cannot open " + res.metrics_path);

  Tensor grad_probs;
  std::size_t completed = epochs_done;
  for (std::size_t epoch = epochs_done + 1; epoch <= cfg.total_epochs; ++epoch) {
    std::vector<std::size_t> order = tr;
    rng.shuffle(order);
    double last_lr = 0.0, last_norm = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, order.size() - start);
      model->zero_grads();
      for (std::size_t k = 0; k < nb; ++k) {
        Sequence s = sequence_from(data, order[start + k], cfg.clip_len);
        Tensor probs = model->forward_train(s);
        grad_probs = Tensor({s.frames(), lc.num_classes});
        frame_losses(probs, s.labels, lc, &grad_probs);
        const double scale = 1.0 / ((double)s.frames() * (double)nb);
        for (std::size_t i = 0; i < grad_probs.size(); ++i) grad_probs[i] *= scale;
        model->backward(grad_probs);
      }
      last_norm = clip_global_norm(params, cfg.grad_clip);
      last_lr = lr_at(adam.step + 1, sched);
      adamw_step(params, adam, last_lr, acfg);
    }

    // Frozen end-of-epoch metrics, same path the eval entry point uses.
    EvalResult etr = evaluate_split(*model, data, tr, lc, cfg.clip_len, cfg.threshold);
    EvalResult eho =
        ho.empty() ? etr : evaluate_split(*model, data, ho, lc, cfg.clip_len, cfg.threshold);
    if (cfg.use_swa != 0 && epoch >= cfg.swa_start_epoch) swa.update(params);

    EpochLog el;
    el.epoch = epoch;
    el.train_loss = etr.loss;
    el.train_macro_f1 = etr.macro_f1;
    el.holdout_loss = eho.loss;
    el.holdout_macro_f1 = eho.macro_f1;
    el.lr = last_lr;
    el.grad_norm = last_norm;
    res.epochs.push_back(el);
    json line = {{"epoch", epoch},
                 {"train_loss", el.train_loss},
                 {"train_macro_f1", el.train_macro_f1},
                 {"holdout_loss", el.holdout_loss},
                 {"holdout_macro_f1", el.holdout_macro_f1},
                 {"lr", el.lr},
                 {"grad_norm", el.grad_norm}};
    metrics << line.dump() << '\n' << std::flush;
    if (opts.log != nullptr) {
      (*opts.log) << "epoch " << epoch << "/" << cfg.total_epochs << " train_loss "
                  << el.train_loss << " train_f1 " << el.train_macro_f1 << " holdout_f1 "
                  << el.holdout_macro_f1 << "\n";
    }

    const bool improved = eho.macro_f1 > best;
    if (improved) {
      best = eho.macro_f1;
      best_epoch = epoch;
    }
    Checkpoint c = snapshot(cfg_text, params, adam, swa, rng, epoch, best, best_epoch);
    save_checkpoint(c, res.last_path);
    if (improved) save_checkpoint(c, res.best_path);
    completed = epoch;
    if (opts.stop_after_epoch != 0 && epoch >= opts.stop_after_epoch) break;
  }

  if (completed == cfg.total_epochs) {
    Checkpoint c = snapshot(cfg_text, params, adam, swa, rng, completed, best, best_epoch);
    save_checkpoint(c, res.final_path);
  }
  res.best_metric = best;
  res.best_epoch = best_epoch;
  return res;
}

LoadedModel load_model(const std::string& ckpt_path, const synth::SynthConfig& data_cfg,
                       bool use_swa) {
  LoadedModel lm;
  lm.ckpt = load_checkpoint(ckpt_path);
  lm.train_cfg = load_config_text<TrainConfig>(lm.ckpt.config_text);
  lm.train_cfg.validate();
  const ModelConfig mc = make_model_config(lm.train_cfg, data_cfg);
  Rng scratch(lm.train_cfg.seed);
  lm.model = make_model(mc, RoiSpec::default_face68(), scratch);
  std::vector<ParamRef> params;
  lm.model->collect_params(params);
  if (use_swa) {
    if (lm.ckpt.swa_n_models == 0 || lm.ckpt.swa_avg.empty())
      throw std::runtime_error(ckpt_path + ": checkpoint holds no weight average");
    copy_named_tensors(lm.ckpt.names, lm.ckpt.swa_avg, params, "swa load");
  } else {
    copy_named_tensors(lm.ckpt.names, lm.ckpt.params, params, "load");
  }
  return lm;
}

}  // namespace agssm
