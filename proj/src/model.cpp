#include "agssm/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace agssm {

Sequence Sequence::from_sample(const synth::SynthSample& s, double frame_h, double frame_w) {
  Sequence out;
  out.patch_tokens = s.patch_tokens.to_f64();
  out.landmarks = s.landmarks.to_f64();
  out.audio_feats = s.audio_feats.to_f64();
  out.labels = s.labels.to_f64();
  out.frame_h = frame_h;
  out.frame_w = frame_w;
  return out;
}

void ModelConfig::validate() const {
  if (kind != "agssm" && kind != "framewise") {
    throw std::invalid_argument("model kind must be agssm or framewise, got " + kind);
  }
  if (classes == 0 || d_v == 0 || d_a == 0 || grid_h == 0 || grid_w == 0) {
    throw std::invalid_argument("model dims must be positive");
  }
  if (kind == "agssm") {
    if (d_model == 0 || state_dim == 0 || layers == 0) {
      throw std::invalid_argument("agssm dims must be positive");
    }
    if (heads == 0 || d_v % heads != 0) {
      throw std::invalid_argument("heads must divide d_v");
    }
  } else if (mlp_hidden == 0) {
    throw std::invalid_argument("mlp_hidden must be positive");
  }
}

std::size_t total_param_count(const std::vector<ParamRef>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.param->size();
  return n;
}

namespace {

double init_bound(std::size_t fan_in) { return 1.0 / std::sqrt(double(fan_in)); }

void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double b = init_bound(fan_in);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-b, b);
}

// Zips two for_each_param traversals that share field order.
template <class Params, class Grads>
void zip_params(const std::string& prefix, Params& p, Grads& g, std::vector<ParamRef>& out) {
  std::vector<std::pair<const char*, Tensor*>> ps, gs;
  p.for_each_param([&](const char* name, Tensor& t) { ps.emplace_back(name, &t); });
  g.for_each_param([&](const char* name, Tensor& t) { gs.emplace_back(name, &t); });
  if (ps.size() != gs.size()) throw std::logic_error("param/grad field mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (std::string(ps[i].first) != gs[i].first) throw std::logic_error("param/grad name mismatch");
    out.push_back({prefix + ps[i].first, ps[i].second, gs[i].second});
  }
}

void sigmoid_head(const Tensor& w, const Tensor& b, const Tensor& feats, Tensor& probs) {
  const std::size_t t_len = feats.dim(0), d = feats.dim(1), c_dim = w.dim(0);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t c = 0; c < c_dim; ++c) {
      const double z = dot(&w(c, 0), &feats(t, 0), d) + b[c];
      probs(t, c) = sigmoid(z);
    }
  }
}

// Refills lm/grid scratch from frame t without reallocating.
void load_frame(const Sequence& seq, std::size_t t, std::size_t gh, std::size_t gw,
                LandmarkSet& lm, PatchGrid& grid) {
  const std::size_t n_v = seq.patch_tokens.dim(1), d_v = seq.patch_tokens.dim(2);
  if (grid.tokens.size() == 0) grid.tokens = Tensor({n_v, d_v});
  for (std::size_t p = 0; p < n_v; ++p)
    for (std::size_t j = 0; j < d_v; ++j) grid.tokens(p, j) = seq.patch_tokens(t, p, j);
  grid.grid_h = gh;
  grid.grid_w = gw;
  const std::size_t k = seq.landmarks.dim(1);
  if (lm.points.size() == 0) lm.points = Tensor({k, 2});
  for (std::size_t i = 0; i < k; ++i) {
    lm.points(i, 0) = seq.landmarks(t, i, 0);
    lm.points(i, 1) = seq.landmarks(t, i, 1);
  }
  lm.frame_h = seq.frame_h;
  lm.frame_w = seq.frame_w;
}

class AgSsmModel final : public SequenceModel {
 public:
  AgSsmModel(const ModelConfig& cfg, RoiSpec roi, Rng& rng) : cfg_(cfg), roi_(std::move(roi)) {
    cfg_.validate();
    hga_ = HgaParams::create(cfg_.d_v, cfg_.heads, cfg_.d_model, cfg_.d_v);
    hga_.init(rng);
    hga_g_ = HgaGrads::zeros_like(hga_, 1);
    w_audio_ = Tensor({cfg_.d_model, cfg_.d_a});
    b_audio_ = Tensor({cfg_.d_model});
    init_uniform(w_audio_, cfg_.d_a, rng);
    gw_audio_ = Tensor::zeros_like(w_audio_);
    gb_audio_ = Tensor::zeros_like(b_audio_);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      auto p = AgSsmLayerParams::create(cfg_.d_model, cfg_.state_dim);
      p.init(rng);
      layer_g_.push_back(AgSsmGrads::zeros_like(p, 1));
      layers_.push_back(std::move(p));
    }
    w_head_ = Tensor({cfg_.classes, cfg_.d_model});
    b_head_ = Tensor({cfg_.classes});
    init_uniform(w_head_, cfg_.d_model, rng);
    gw_head_ = Tensor::zeros_like(w_head_);
    gb_head_ = Tensor::zeros_like(b_head_);
  }

  const ModelConfig& config() const override { return cfg_; }

  Tensor forward(const Sequence& seq) const override {
    return const_cast<AgSsmModel*>(this)->run(seq, false);
  }

  Tensor forward_train(const Sequence& seq) override { return run(seq, true); }

  void backward(const Tensor& grad_probs) override {
    if (seq_ == nullptr) throw std::logic_error("backward without forward_train");
    const Sequence& seq = *seq_;
    const std::size_t t_len = seq.frames(), d = cfg_.d_model, c_dim = cfg_.classes;
    require_shape(grad_probs, {t_len, c_dim}, "grad_probs");

    // Head: probs = sigmoid(W feats + b).
    Tensor dfeats({t_len, d});
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t c = 0; c < c_dim; ++c) {
        const double p = probs_(t, c);
        const double dz = grad_probs(t, c) * p * (1.0 - p);
        gb_head_[c] += dz;
        for (std::size_t i = 0; i < d; ++i) {
          gw_head_(c, i) += dz * feats_(t, i);
          dfeats(t, i) += dz * w_head_(c, i);
        }
      }
    }

    // Layer stack ran as: cur_{l+1} = cur_l + layer_l(cur_l) for all but the
    // last layer, feats = layer_last(cur_last).
    Tensor dx_a({t_len, d});
    const std::size_t last = cfg_.layers - 1;
    Tensor dcur = backprop_layer(last, dfeats, dx_a);
    for (std::size_t l = last; l-- > 0;) {
      Tensor dthrough = backprop_layer(l, dcur, dx_a);
      for (std::size_t i = 0; i < dcur.size(); ++i) dcur[i] += dthrough[i];
    }

    // Audio projection x_a = W_a audio + b_a.
    const std::size_t d_a = cfg_.d_a;
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t i = 0; i < d; ++i) {
        const double g = dx_a(t, i);
        if (g == 0.0) continue;
        gb_audio_[i] += g;
        for (std::size_t j = 0; j < d_a; ++j) gw_audio_(i, j) += g * seq.audio_feats(t, j);
      }
    }

    // Visual path: x_v[t] is the mean over the M region descriptors. The HGA
    // context is recomputed frame by frame; holding T of them would dominate
    // memory.
    const std::size_t m = roi_.regions.size();
    Tensor df({m, d});
    LandmarkSet lm;
    PatchGrid grid;
    HgaContext hctx;
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t i = 0; i < d; ++i) df(r, i) = dcur(t, i) / double(m);
      load_frame(seq, t, cfg_.grid_h, cfg_.grid_w, lm, grid);
      hga_forward_train(grid, lm, roi_, hga_, hctx);
      hga_g_.tokens = Tensor({grid.tokens.dim(0), grid.tokens.dim(1)});
      hga_backward(grid, hga_, hctx, df, hga_g_);
    }
    seq_ = nullptr;
  }

  void zero_grads() override {
    std::vector<ParamRef> ps;
    collect_params(ps);
    for (auto& p : ps) p.grad->fill(0.0);
  }

  void collect_params(std::vector<ParamRef>& out) override {
    zip_params("hga.", hga_, hga_g_, out);
    out.push_back({"audio.w", &w_audio_, &gw_audio_});
    out.push_back({"audio.b", &b_audio_, &gb_audio_});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      zip_params("ssm" + std::to_string(l) + ".", layers_[l], layer_g_[l], out);
    }
    out.push_back({"head.w", &w_head_, &gw_head_});
    out.push_back({"head.b", &b_head_, &gb_head_});
  }

 private:
  Tensor backprop_layer(std::size_t l, const Tensor& dy, Tensor& dx_a) {
    AgSsmGrads& g = layer_g_[l];
    const std::size_t t_len = dy.dim(0);
    g.x_v = Tensor({t_len, cfg_.d_model});
    g.x_a = Tensor({t_len, cfg_.d_model});
    ag_ssm_backward(layers_[l], layer_ctx_[l], dy, g);
    for (std::size_t i = 0; i < dx_a.size(); ++i) dx_a[i] += g.x_a[i];
    return std::move(g.x_v);
  }

  Tensor run(const Sequence& seq, bool train) {
    const std::size_t t_len = seq.frames(), d = cfg_.d_model;
    const std::size_t m = roi_.regions.size();
    Tensor x_v({t_len, d});
    LandmarkSet lm;
    PatchGrid grid;
    for (std::size_t t = 0; t < t_len; ++t) {
      load_frame(seq, t, cfg_.grid_h, cfg_.grid_w, lm, grid);
      Tensor f = hga_forward(grid, lm, roi_, hga_);  // [M, d_model]
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t i = 0; i < d; ++i) x_v(t, i) += f(r, i) / double(m);
    }
    Tensor x_a = linear_rows(w_audio_, seq.audio_feats, b_audio_);

    Tensor cur = x_v;
    std::vector<AgSsmContext> ctx(train ? cfg_.layers : 0);
    for (std::size_t l = 0; l + 1 < cfg_.layers; ++l) {
      Tensor out = train ? ag_ssm_forward_train(layers_[l], cur, x_a, ctx[l])
                         : ag_ssm_forward(layers_[l], cur, x_a);
      for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += out[i];
    }
    Tensor feats = train ? ag_ssm_forward_train(layers_.back(), cur, x_a, ctx.back())
                         : ag_ssm_forward(layers_.back(), cur, x_a);

    Tensor probs({t_len, cfg_.classes});
    sigmoid_head(w_head_, b_head_, feats, probs);
    if (train) {
      seq_ = &seq;
      layer_ctx_ = std::move(ctx);
      feats_ = std::move(feats);
      probs_ = probs;
    }
    return probs;
  }

  ModelConfig cfg_;
  RoiSpec roi_;
  HgaParams hga_;
  HgaGrads hga_g_;
  Tensor w_audio_, b_audio_, gw_audio_, gb_audio_;
  std::vector<AgSsmLayerParams> layers_;
  std::vector<AgSsmGrads> layer_g_;
  Tensor w_head_, b_head_, gw_head_, gb_head_;

  const Sequence* seq_ = nullptr;
  std::vector<AgSsmContext> layer_ctx_;
  Tensor feats_, probs_;
};

// No recurrence: pooled region descriptors plus the raw audio frame through a
// one-hidden-layer MLP. Serves as the framewise reference point.
class FramewiseModel final : public SequenceModel {
 public:
  FramewiseModel(const ModelConfig& cfg, RoiSpec roi, Rng& rng) : cfg_(cfg), roi_(std::move(roi)) {
    cfg_.validate();
    in_dim_ = (roi_.regions.size() + 1) * cfg_.d_v + cfg_.d_a;
    w1_ = Tensor({cfg_.mlp_hidden, in_dim_});
    b1_ = Tensor({cfg_.mlp_hidden});
    w2_ = Tensor({cfg_.classes, cfg_.mlp_hidden});
    b2_ = Tensor({cfg_.classes});
    init_uniform(w1_, in_dim_, rng);
    init_uniform(w2_, cfg_.mlp_hidden, rng);
    gw1_ = Tensor::zeros_like(w1_);
    gb1_ = Tensor::zeros_like(b1_);
    gw2_ = Tensor::zeros_like(w2_);
    gb2_ = Tensor::zeros_like(b2_);
  }

  const ModelConfig& config() const override { return cfg_; }

  Tensor forward(const Sequence& seq) const override {
    return const_cast<FramewiseModel*>(this)->run(seq, false);
  }

  Tensor forward_train(const Sequence& seq) override { return run(seq, true); }

  void backward(const Tensor& grad_probs) override {
    if (feats_.size() == 0) throw std::logic_error("backward without forward_train");
    const std::size_t t_len = feats_.dim(0), h = cfg_.mlp_hidden, c_dim = cfg_.classes;
    require_shape(grad_probs, {t_len, c_dim}, "grad_probs");
    std::vector<double> dhid(h);
    for (std::size_t t = 0; t < t_len; ++t) {
      std::fill(dhid.begin(), dhid.end(), 0.0);
      for (std::size_t c = 0; c < c_dim; ++c) {
        const double p = probs_(t, c);
        const double dz = grad_probs(t, c) * p * (1.0 - p);
        gb2_[c] += dz;
        for (std::size_t i = 0; i < h; ++i) {
          gw2_(c, i) += dz * hid_(t, i);
          dhid[i] += dz * w2_(c, i);
        }
      }
      for (std::size_t i = 0; i < h; ++i) {
        const double dpre = dhid[i] * silu_grad(pre_(t, i));
        gb1_[i] += dpre;
        for (std::size_t j = 0; j < in_dim_; ++j) gw1_(i, j) += dpre * feats_(t, j);
      }
    }
    feats_ = Tensor();
  }

  void zero_grads() override {
    gw1_.fill(0.0);
    gb1_.fill(0.0);
    gw2_.fill(0.0);
    gb2_.fill(0.0);
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back({"mlp.w1", &w1_, &gw1_});
    out.push_back({"mlp.b1", &b1_, &gb1_});
    out.push_back({"mlp.w2", &w2_, &gw2_});
    out.push_back({"mlp.b2", &b2_, &gb2_});
  }

 private:
  Tensor run(const Sequence& seq, bool train) {
    const std::size_t t_len = seq.frames(), m = roi_.regions.size(), d_v = cfg_.d_v;
    Tensor feats({t_len, in_dim_});
    LandmarkSet lm;
    PatchGrid grid;
    for (std::size_t t = 0; t < t_len; ++t) {
      load_frame(seq, t, cfg_.grid_h, cfg_.grid_w, lm, grid);
      auto sets = map_landmarks_to_patches(lm, roi_, cfg_.grid_h, cfg_.grid_w, seq.frame_h,
                                           seq.frame_w);
      Tensor g = pool_global(grid);
      std::size_t off = 0;
      for (std::size_t j = 0; j < d_v; ++j) feats(t, off + j) = g[j];
      off += d_v;
      for (std::size_t r = 0; r < m; ++r) {
        Tensor loc = pool_local(grid, sets[r]);
        for (std::size_t j = 0; j < d_v; ++j) feats(t, off + j) = loc[j];
        off += d_v;
      }
      for (std::size_t j = 0; j < cfg_.d_a; ++j) feats(t, off + j) = seq.audio_feats(t, j);
    }
    Tensor pre = linear_rows(w1_, feats, b1_);
    Tensor hid = Tensor::zeros_like(pre);
    for (std::size_t i = 0; i < pre.size(); ++i) hid[i] = silu(pre[i]);
    Tensor probs({t_len, cfg_.classes});
    sigmoid_head(w2_, b2_, hid, probs);
    if (train) {
      feats_ = std::move(feats);
      pre_ = std::move(pre);
      hid_ = std::move(hid);
      probs_ = probs;
    }
    return probs;
  }

  ModelConfig cfg_;
  RoiSpec roi_;
  std::size_t in_dim_ = 0;
  Tensor w1_, b1_, w2_, b2_;
  Tensor gw1_, gb1_, gw2_, gb2_;
  Tensor feats_, pre_, hid_, probs_;
};

}  // namespace

std::unique_ptr<SequenceModel> make_model(const ModelConfig& cfg, const RoiSpec& roi, Rng& rng) {
  cfg.validate();
  if (cfg.kind == "framewise") return std::make_unique<FramewiseModel>(cfg, roi, rng);
  return std::make_unique<AgSsmModel>(cfg, roi, rng);
}

}  // namespace agssm
