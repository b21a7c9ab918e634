#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "agssm/ag_ssm.hpp"
#include "agssm/bench.hpp"
#include "agssm/checkpoint.hpp"
#include "agssm/config.hpp"
#include "agssm/gradcheck.hpp"
#include "agssm/hga.hpp"
#include "agssm/loss.hpp"
#include "agssm/model.hpp"
#include "agssm/rng.hpp"
#include "agssm/serialize.hpp"
#include "agssm/ssm.hpp"
#include "agssm/synth.hpp"
#include "agssm/trainer.hpp"

using nlohmann::json;
using namespace agssm;

namespace {

std::string slurp_or_empty(const std::string& path) {
  if (path.empty()) return "";
  return io::read_text_file(path);
}

// Overrides are "key=value"; lines in the base text whose key is overridden
// are replaced in place, new keys are appended.
std::string merge_config_text(const std::string& base, const std::vector<std::string>& sets) {
  std::map<std::string, std::string> over;
  std::vector<std::string> order;
  for (const std::string& s : sets) {
    auto pos = s.find('=');
    if (pos == std::string::npos || pos == 0)
      throw std::runtime_error("--set wants key=value, got '" + s + "'");
    std::string k = s.substr(0, pos), v = s.substr(pos + 1);
    while (!k.empty() && (k.back() == ' ' || k.back() == '\t')) k.pop_back();
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.erase(v.begin());
    if (over.insert({k, v}).second) order.push_back(k);
    else over[k] = v;
  }
  std::ostringstream out;
  std::istringstream in(base);
  std::string line;
  std::map<std::string, bool> used;
  while (std::getline(in, line)) {
    std::string t = line;
    auto first = t.find_first_not_of(" \t");
    if (first != std::string::npos && t[first] != '#') {
      auto eq = t.find('=');
      if (eq != std::string::npos) {
        std::string k = t.substr(first, eq - first);
        while (!k.empty() && (k.back() == ' ' || k.back() == '\t')) k.pop_back();
        auto it = over.find(k);
        if (it != over.end()) {
          out << k << " = " << it->second << "\n";
          used[k] = true;
          continue;
        }
      }
    }
    out << line << "\n";
  }
  for (const std::string& k : order)
    if (!used.count(k)) out << k << " = " << over[k] << "\n";
  return out.str();
}

double mean_frame_loss(const Tensor& probs, const Tensor& labels, const AslConfig& lc,
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
    sum += r.loss / (double)t_len;
    if (grad_probs != nullptr)
      for (std::size_t j = 0; j < c; ++j)
        (*grad_probs)(t, j) = r.grad_wrt_p[j] / (double)t_len;
  }
  return sum;
}

// Flat view over a fixed list of tensors, for scalarized gradient checks.
struct FlatPack {
  std::vector<Tensor*> slots;
  std::size_t total() const {
    std::size_t n = 0;
    for (auto* t : slots) n += t->size();
    return n;
  }
  Tensor gather() const {
    Tensor flat({total()});
    std::size_t k = 0;
    for (auto* t : slots)
      for (std::size_t i = 0; i < t->size(); ++i) flat[k++] = (*t)[i];
    return flat;
  }
  void scatter(const Tensor& flat) const {
    std::size_t k = 0;
    for (auto* t : slots)
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = flat[k++];
  }
};

struct OpCheck {
  std::string name;
  GradCheckReport report;
  double ms = 0.0;
};

OpCheck check_scan(Rng& rng, double eps) {
  const std::size_t t_len = 16, n = 4;
  ScanParams p;
  p.a_bar = Tensor({t_len, n});
  p.b_bar = Tensor({t_len, n});
  p.c = Tensor({t_len, n});
  Tensor x({t_len}), h0({n}), w({t_len});
  for (std::size_t i = 0; i < p.a_bar.size(); ++i) p.a_bar[i] = rng.uniform(-0.9, 0.9);
  for (std::size_t i = 0; i < p.b_bar.size(); ++i) p.b_bar[i] = rng.normal(0.0, 0.7);
  for (std::size_t i = 0; i < p.c.size(); ++i) p.c[i] = rng.normal(0.0, 0.7);
  for (std::size_t i = 0; i < t_len; ++i) x[i] = rng.normal(0.0, 0.7);
  for (std::size_t i = 0; i < n; ++i) h0[i] = rng.normal(0.0, 0.7);
  for (std::size_t i = 0; i < t_len; ++i) w[i] = rng.normal(0.0, 1.0);

  FlatPack pack{{&p.a_bar, &p.b_bar, &p.c, &x, &h0}};
  auto f = [&](const Tensor& flat) {
    pack.scatter(flat);
    ScanResult r = scan_sequential(p, x, h0);
    double s = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) s += w[t] * r.y[t];
    return s;
  };
  Tensor x0 = pack.gather();
  ScanGrads g = scan_backward(p, x, h0, w);
  FlatPack gpack{{&g.a_bar, &g.b_bar, &g.c, &g.x, &g.h0}};
  OpCheck out{"scan", {}, 0.0};
  out.report = grad_check(f, x0, gpack.gather(), eps);
  return out;
}

OpCheck check_ag_ssm(Rng& rng, double eps) {
  const std::size_t t_len = 8, d = 3, n = 2;
  AgSsmLayerParams p = AgSsmLayerParams::create(d, n);
  p.init(rng);
  Tensor x_v({t_len, d}), x_a({t_len, d}), w({t_len, d});
  for (std::size_t i = 0; i < x_v.size(); ++i) x_v[i] = rng.normal(0.0, 0.5);
  for (std::size_t i = 0; i < x_a.size(); ++i) x_a[i] = rng.normal(0.0, 0.5);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, 1.0);

  FlatPack pack{{&p.w_s, &p.b_s, &p.w_delta, &p.b_delta, &p.delta_base, &p.w_b, &p.w_c, &p.w_g,
                 &p.a_log, &x_v, &x_a}};
  auto f = [&](const Tensor& flat) {
    pack.scatter(flat);
    Tensor y = ag_ssm_forward(p, x_v, x_a);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };
  Tensor x0 = pack.gather();
  AgSsmContext ctx;
  ag_ssm_forward_train(p, x_v, x_a, ctx);
  AgSsmGrads g = AgSsmGrads::zeros_like(p, t_len);
  ag_ssm_backward(p, ctx, w, g);
  FlatPack gpack{{&g.w_s, &g.b_s, &g.w_delta, &g.b_delta, &g.delta_base, &g.w_b, &g.w_c, &g.w_g,
                  &g.a_log, &g.x_v, &g.x_a}};
  OpCheck out{"ag_ssm", {}, 0.0};
  out.report = grad_check(f, x0, gpack.gather(), eps);
  return out;
}

OpCheck check_hga(Rng& rng, double eps) {
  const std::size_t d_v = 8, heads = 2, d_out = 6;
  PatchGrid grid;
  grid.grid_h = 4;
  grid.grid_w = 4;
  grid.tokens = Tensor({16, d_v});
  for (std::size_t i = 0; i < grid.tokens.size(); ++i) grid.tokens[i] = rng.normal(0.0, 0.6);
  LandmarkSet lm;
  lm.frame_h = 32.0;
  lm.frame_w = 32.0;
  lm.points = Tensor({5, 2});
  for (std::size_t i = 0; i < 5; ++i) {
    lm.points(i, 0) = rng.uniform(0.0, 32.0);
    lm.points(i, 1) = rng.uniform(0.0, 32.0);
  }
  RoiSpec roi;
  roi.regions.push_back({"a", {0, 1, 2}});
  roi.regions.push_back({"b", {3, 4}});
  HgaParams p = HgaParams::create(d_v, heads, d_out, d_v);
  p.init(rng);
  Tensor w({roi.count(), d_out});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, 1.0);

  FlatPack pack{
      {&p.w_q, &p.w_k, &p.w_v, &p.w_o, &p.b_o, &p.w1, &p.b1, &p.w2, &p.b2, &grid.tokens}};
  auto f = [&](const Tensor& flat) {
    pack.scatter(flat);
    Tensor out = hga_forward(grid, lm, roi, p);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
    return s;
  };
  Tensor x0 = pack.gather();
  HgaContext ctx;
  hga_forward_train(grid, lm, roi, p, ctx);
  HgaGrads g = HgaGrads::zeros_like(p, grid.num_patches());
  hga_backward(grid, p, ctx, w, g);
  FlatPack gpack{{&g.w_q, &g.w_k, &g.w_v, &g.w_o, &g.b_o, &g.w1, &g.b1, &g.w2, &g.b2, &g.tokens}};
  OpCheck out{"hga", {}, 0.0};
  out.report = grad_check(f, x0, gpack.gather(), eps);
  return out;
}

OpCheck check_asl(Rng& rng, double eps) {
  AslConfig lc;
  LabelFrame frame;
  frame.probs = Tensor({lc.num_classes});
  frame.labels = Tensor({lc.num_classes});
  for (std::size_t i = 0; i < lc.num_classes; ++i) {
    frame.probs[i] = rng.uniform(0.15, 0.85);
    frame.labels[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
  FlatPack pack{{&frame.probs}};
  auto f = [&](const Tensor& flat) {
    pack.scatter(flat);
    return asl_loss(frame, lc).loss;
  };
  Tensor x0 = pack.gather();
  AslResult r = asl_loss(frame, lc);
  OpCheck out{"asl", {}, 0.0};
  out.report = grad_check(f, x0, r.grad_wrt_p, eps);
  return out;
}

Sequence tiny_sequence(Rng& rng, std::size_t t_len, std::size_t n_v, std::size_t d_v,
                       std::size_t d_a, std::size_t classes) {
  Sequence s;
  s.frame_h = 32.0;
  s.frame_w = 32.0;
  s.patch_tokens = Tensor({t_len, n_v, d_v});
  s.landmarks = Tensor({t_len, 68, 2});
  s.audio_feats = Tensor({t_len, d_a});
  s.labels = Tensor({t_len, classes});
  for (std::size_t i = 0; i < s.patch_tokens.size(); ++i)
    s.patch_tokens[i] = rng.normal(0.0, 0.5);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t k = 0; k < 68; ++k) {
      s.landmarks(t, k, 0) = rng.uniform(0.0, 32.0);
      s.landmarks(t, k, 1) = rng.uniform(0.0, 32.0);
    }
  for (std::size_t i = 0; i < s.audio_feats.size(); ++i) s.audio_feats[i] = rng.normal(0.0, 0.5);
  for (std::size_t i = 0; i < s.labels.size(); ++i)
    s.labels[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return s;
}

OpCheck check_model(const std::string& kind, Rng& rng, double eps) {
  ModelConfig mc;
  mc.kind = kind;
  mc.classes = 2;
  mc.grid_h = 2;
  mc.grid_w = 2;
  mc.d_v = 4;
  mc.d_a = 3;
  mc.d_model = 6;
  mc.state_dim = 3;
  mc.layers = 2;
  mc.heads = 2;
  mc.mlp_hidden = 5;
  auto model = make_model(mc, RoiSpec::default_face68(), rng);
  Sequence seq = tiny_sequence(rng, 5, 4, mc.d_v, mc.d_a, mc.classes);
  AslConfig lc;
  lc.num_classes = mc.classes;

  std::vector<ParamRef> params;
  model->collect_params(params);
  // Generic point: the symmetric small init leaves some directions with
  // vanishing gradients, which finite differences cannot resolve. Step sizes
  // get pushed into an O(1) band for the same reason.
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.param->size(); ++i) (*p.param)[i] += rng.uniform(-0.4, 0.4);
    if (p.name.size() >= 10 && p.name.substr(p.name.size() - 10) == "delta_base")
      for (std::size_t i = 0; i < p.param->size(); ++i)
        (*p.param)[i] = softplus_inverse(rng.uniform(0.3, 1.2));
  }
  FlatPack pack;
  for (auto& p : params) pack.slots.push_back(p.param);
  auto f = [&](const Tensor& flat) {
    pack.scatter(flat);
    Tensor probs = model->forward(seq);
    return mean_frame_loss(probs, seq.labels, lc, nullptr);
  };
  Tensor x0 = pack.gather();
  model->zero_grads();
  Tensor probs = model->forward_train(seq);
  Tensor grad_probs({seq.frames(), mc.classes});
  mean_frame_loss(probs, seq.labels, lc, &grad_probs);
  model->backward(grad_probs);
  FlatPack gpack;
  for (auto& p : params) gpack.slots.push_back(p.grad);
  OpCheck out{"model_" + kind, {}, 0.0};
  out.report = grad_check_directional(f, x0, gpack.gather(), 64, rng, eps);
  pack.scatter(x0);  // restore, f leaves the last probe state behind
  return out;
}

int run_gradcheck(std::uint64_t seed, double tolerance, double eps) {
  using clock = std::chrono::steady_clock;
  std::vector<OpCheck> checks;
  auto timed = [&](auto&& fn, std::uint64_t stream) {
    Rng rng(Rng::derive_seed(seed, stream));
    auto t0 = clock::now();
    OpCheck c = fn(rng, eps);
    c.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    checks.push_back(std::move(c));
  };
  timed([&](Rng& r, double e) { return check_scan(r, e); }, 1);
  timed([&](Rng& r, double e) { return check_ag_ssm(r, e); }, 2);
  timed([&](Rng& r, double e) { return check_hga(r, e); }, 3);
  timed([&](Rng& r, double e) { return check_asl(r, e); }, 4);
  timed([&](Rng& r, double e) { return check_model("framewise", r, e); }, 5);
  timed([&](Rng& r, double e) { return check_model("agssm", r, e); }, 6);

  bool all_pass = true;
  for (const OpCheck& c : checks) {
    const bool pass = c.report.max_rel_err < tolerance;
    all_pass = all_pass && pass;
    std::ostringstream line;
    line.setf(std::ios::scientific);
    line.precision(3);
    line << "op=" << c.name << " max_rel_err=" << c.report.max_rel_err
         << " tolerance=" << tolerance << " worst_index=" << c.report.worst_index
         << " analytic=" << c.report.analytic_at_worst
         << " numeric=" << c.report.numeric_at_worst << " ms=" << c.ms
         << " status=" << (pass ? "pass" : "fail");
    std::cout << line.str() << "\n";
  }
  std::cout << (all_pass ? "gradcheck: all ops pass" : "gradcheck: FAILURES above") << "\n";
  return all_pass ? 0 : 1;
}

std::vector<std::size_t> pick_split(const std::string& split, std::size_t n, double frac) {
  std::vector<std::size_t> tr, ho;
  split_indices(n, frac, tr, ho);
  if (split == "train") return tr;
  if (split == "holdout") return ho;
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-guided selective state space pipeline"};
  app.require_subcommand(1);
  int rc = 0;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
  std::string gen_out, gen_config;
  std::vector<std::string> gen_sets;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output dataset path")->required();
  gen->add_option("--seed", gen_seed, "master seed (required; no implicit default)")->required();
  gen->add_option("--config", gen_config, "synth config file");
  gen->add_option("--set", gen_sets, "override config key, key=value");
  gen->callback([&] {
    std::string text = merge_config_text(slurp_or_empty(gen_config), gen_sets);
    auto cfg = load_config_text<synth::SynthConfig>(text);
    cfg.seed = gen_seed;
    cfg.finalize();
    synth::Dataset data = synth::generate(cfg);
    synth::export_dataset(data, gen_out);
    auto prev = synth::empirical_prevalence(data);
    json j = {{"path", gen_out},
              {"sequences", data.samples.size()},
              {"frames_per_sequence", cfg.frames},
              {"classes", cfg.classes},
              {"seed", cfg.seed},
              {"empirical_prevalence", prev}};
    std::cout << j.dump() << "\n";
  });

  // train
  auto* tr = app.add_subcommand("train", "train a model on a dataset file");
  std::string tr_data, tr_out, tr_config;
  std::vector<std::string> tr_sets;
  std::uint64_t tr_seed = 0;
  bool tr_resume = false;
  std::size_t tr_stop = 0;
  bool tr_quiet = false;
  tr->add_option("--data", tr_data, "dataset path")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--seed", tr_seed, "training seed (required; no implicit default)")->required();
  tr->add_option("--config", tr_config, "train config file");
  tr->add_option("--set", tr_sets, "override config key, key=value");
  tr->add_flag("--resume", tr_resume, "continue from <out>/last.ckpt");
  tr->add_option("--stop-after-epoch", tr_stop, "pause after this epoch, resumable");
  tr->add_flag("--quiet", tr_quiet, "no per-epoch progress on stderr");
  tr->callback([&] {
    std::string text = merge_config_text(slurp_or_empty(tr_config), tr_sets);
    auto cfg = load_config_text<TrainConfig>(text);
    cfg.seed = tr_seed;
    synth::Dataset data = synth::import_dataset(tr_data);
    TrainOptions opts;
    opts.resume = tr_resume;
    opts.stop_after_epoch = tr_stop;
    opts.log = tr_quiet ? nullptr : &std::cerr;
    TrainResult r = train(data, cfg, tr_out, opts);
    json j = {{"epochs_run", r.epochs.size()},
              {"best_metric", r.best_metric},
              {"best_epoch", r.best_epoch},
              {"last", r.last_path},
              {"best", r.best_path},
              {"metrics", r.metrics_path}};
    if (!r.epochs.empty()) {
      const EpochLog& e = r.epochs.back();
      j["final_epoch"] = e.epoch;
      j["train_loss"] = e.train_loss;
      j["train_macro_f1"] = e.train_macro_f1;
      j["holdout_loss"] = e.holdout_loss;
      j["holdout_macro_f1"] = e.holdout_macro_f1;
      j["completed"] = e.epoch == cfg.total_epochs;
    } else {
      j["completed"] = true;  // resumed past the end, nothing to do
    }
    std::cout << j.dump() << "\n";
  });

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string ev_data, ev_ckpt, ev_split = "holdout";
  bool ev_swa = false, ev_zero_audio = false;
  ev->add_option("--data", ev_data, "dataset path")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--split", ev_split, "train | holdout | all")
      ->check(CLI::IsMember({"train", "holdout", "all"}));
  ev->add_flag("--use-swa", ev_swa, "evaluate the averaged weights");
  ev->add_flag("--zero-audio", ev_zero_audio, "blank the audio stream first");
  ev->callback([&] {
    synth::Dataset data = synth::import_dataset(ev_data);
    LoadedModel lm = load_model(ev_ckpt, data.config, ev_swa);
    AslConfig lc = lm.train_cfg.loss_config(data.config.classes);
    auto idx = pick_split(ev_split, data.samples.size(), lm.train_cfg.holdout_fraction);
    EvalResult r = evaluate_split(*lm.model, data, idx, lc, lm.train_cfg.clip_len,
                                  lm.train_cfg.threshold, ev_zero_audio);
    std::vector<double> per_class(r.per_class_f1.size());
    for (std::size_t i = 0; i < per_class.size(); ++i) per_class[i] = r.per_class_f1[i];
    json j = {{"split", ev_split},
              {"sequences", idx.size()},
              {"frames", r.frames},
              {"loss", r.loss},
              {"macro_f1", r.macro_f1},
              {"per_class_f1", per_class},
              {"use_swa", ev_swa},
              {"zero_audio", ev_zero_audio},
              {"epochs_done", lm.ckpt.epochs_done},
              {"swa_n_models", lm.ckpt.swa_n_models}};
    std::cout << j.dump() << "\n";
  });

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for every operator");
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4, gc_eps = 1e-5;
  gc->add_option("--seed", gc_seed, "probe seed (required; no implicit default)")->required();
  gc->add_option("--tolerance", gc_tol, "max relative error allowed");
  gc->add_option("--eps", gc_eps, "finite-difference step");
  gc->callback([&] { rc = run_gradcheck(gc_seed, gc_tol, gc_eps); });

  // bench
  auto* be = app.add_subcommand("bench", "scan vs attention forward scaling");
  std::string be_lengths = "1024,2048,4096,8192";
  std::uint64_t be_seed = 0;
  std::size_t be_reps = 5, be_d = 64, be_n = 16;
  be->add_option("--lengths", be_lengths, "comma-separated, strictly ascending");
  be->add_option("--seed", be_seed, "input seed (required; no implicit default)")->required();
  be->add_option("--reps", be_reps, "timings per point, median is reported");
  be->add_option("--d-model", be_d, "channel count");
  be->add_option("--state-dim", be_n, "state dimension");
  be->callback([&] {
    BenchConfig cfg;
    cfg.reps = be_reps;
    cfg.d_model = be_d;
    cfg.state_dim = be_n;
    cfg.seed = be_seed;
    std::istringstream in(be_lengths);
    std::string item;
    while (std::getline(in, item, ','))
      cfg.lengths.push_back((std::size_t)std::stoull(item));
    auto rows = run_bench(cfg);
    json jrows = json::array();
    for (const auto& r : rows) {
      jrows.push_back({{"op", r.op},
                       {"length", r.length},
                       {"median_ms", r.median_ms},
                       {"times_ms", r.times_ms},
                       {"status", r.status}});
    }
    json ratios = json::object();
    for (const char* op : {"ag_ssm", "attention"}) {
      json list = json::array();
      const BenchRow* prev = nullptr;
      for (const auto& r : rows) {
        if (r.op != op || r.status != "ok") continue;
        if (prev != nullptr && r.length == 2 * prev->length && prev->median_ms > 0.0) {
          list.push_back({{"from", prev->length},
                          {"to", r.length},
                          {"ratio", r.median_ms / prev->median_ms}});
        }
        prev = &r;
      }
      ratios[op] = list;
    }
    json j = {{"rows", jrows}, {"doubling_ratios", ratios}};
    std::cout << j.dump() << "\n";
  });

  // inspect
  auto* in = app.add_subcommand("inspect", "summarize a checkpoint");
  std::string in_ckpt;
  bool in_config = false;
  in->add_option("--ckpt", in_ckpt, "checkpoint path")->required();
  in->add_flag("--config", in_config, "include the stored config text");
  in->callback([&] {
    Checkpoint c = load_checkpoint(in_ckpt);
    std::map<std::string, std::size_t> by_module;
    std::size_t total = 0;
    for (std::size_t i = 0; i < c.names.size(); ++i) {
      const std::string& n = c.names[i];
      std::string mod = n.substr(0, n.find('.'));
      by_module[mod] += c.params[i].size();
      total += c.params[i].size();
    }
    json j = {{"path", in_ckpt},
              {"epochs_done", c.epochs_done},
              {"best_metric", c.best_metric},
              {"best_epoch", c.best_epoch},
              {"adam_step", c.adam_step},
              {"swa_n_models", c.swa_n_models},
              {"param_total", total},
              {"params_by_module", by_module},
              {"tensors", c.names.size()}};
    if (in_config) j["config"] = c.config_text;
    std::cout << j.dump() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
