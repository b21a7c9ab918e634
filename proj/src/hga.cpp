#include "agssm/hga.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace agssm {

namespace {

constexpr int kNumLandmarks = 68;

void check_frame_inputs(const PatchGrid& grid, const LandmarkSet& lm, const RoiSpec& roi,
                        const HgaParams& p) {
  grid.validate();
  p.validate();
  roi.validate(lm.count());
  if (grid.token_dim() != p.d_v)
    throw std::invalid_argument("hga: token width " + std::to_string(grid.token_dim()) +
                                " != params d_v " + std::to_string(p.d_v));
  if (lm.points.rank() != 2 || lm.points.dim(1) != 2)
    throw std::invalid_argument("hga: landmarks must be [K,2], got " + lm.points.shape_str());
  if (!(lm.frame_h > 0.0) || !(lm.frame_w > 0.0))
    throw std::invalid_argument("hga: landmark frame dims must be positive");
}

}  // namespace

RoiSpec RoiSpec::default_face68() {
  auto span = [](int lo, int hi) {
    std::vector<int> ids;
    for (int i = lo; i <= hi; ++i) ids.push_back(i);
    return ids;
  };
  RoiSpec roi;
  roi.regions = {
      {"left_eyebrow", span(22, 26)}, {"right_eyebrow", span(17, 21)},
      {"left_eye", span(42, 47)},     {"right_eye", span(36, 41)},
      {"nose", span(27, 35)},         {"mouth", span(48, 67)},
      {"jaw", span(0, 16)},
  };
  return roi;
}

RoiSpec RoiSpec::parse(const std::string& text) {
  RoiSpec roi;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("RoiSpec line " + std::to_string(line_no) +
                                  ": expected 'name: id id ...'");
    RoiSpec::Region region;
    region.name = line.substr(0, colon);
    region.name.erase(0, region.name.find_first_not_of(" \t"));
    region.name.erase(region.name.find_last_not_of(" \t") + 1);
    std::istringstream ids(line.substr(colon + 1));
    int id;
    while (ids >> id) region.landmark_ids.push_back(id);
    if (!ids.eof())
      throw std::invalid_argument("RoiSpec line " + std::to_string(line_no) + ": bad index");
    roi.regions.push_back(std::move(region));
  }
  roi.validate(kNumLandmarks);
  return roi;
}

void RoiSpec::validate(std::size_t num_landmarks) const {
  if (regions.empty()) throw std::invalid_argument("RoiSpec: no regions");
  for (const Region& r : regions) {
    if (r.name.empty()) throw std::invalid_argument("RoiSpec: unnamed region");
    if (r.landmark_ids.empty())
      throw std::invalid_argument("RoiSpec: empty region '" + r.name + "'");
    for (int id : r.landmark_ids)
      if (id < 0 || (std::size_t)id >= num_landmarks)
        throw std::invalid_argument("RoiSpec: landmark index " + std::to_string(id) +
                                    " out of range in '" + r.name + "'");
  }
}

void PatchGrid::validate() const {
  if (grid_h == 0 || grid_w == 0) throw std::invalid_argument("PatchGrid: zero grid dims");
  if (tokens.rank() != 2 || tokens.dim(0) != grid_h * grid_w)
    throw std::invalid_argument("PatchGrid: tokens must be [" +
                                std::to_string(grid_h * grid_w) + ", D_v], got " +
                                tokens.shape_str());
}

HgaParams HgaParams::create(std::size_t d_v, std::size_t heads, std::size_t d_out,
                            std::size_t hidden) {
  HgaParams p;
  p.d_v = d_v;
  p.heads = heads;
  p.d_out = d_out;
  p.hidden = hidden;
  p.w_q = Tensor({d_v, d_v});
  p.w_k = Tensor({d_v, d_v});
  p.w_v = Tensor({d_v, d_v});
  p.w_o = Tensor({d_v, d_v});
  p.b_o = Tensor({d_v});
  p.w1 = Tensor({hidden, 3 * d_v});
  p.b1 = Tensor({hidden});
  p.w2 = Tensor({d_out, hidden});
  p.b2 = Tensor({d_out});
  p.validate();
  return p;
}

void HgaParams::init(Rng& rng) {
  for_each_param([&rng](const char*, Tensor& t) {
    if (t.rank() != 2) {
      t.fill(0.0);
      return;
    }
    const double bound = 1.0 / std::sqrt((double)t.dim(1));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  });
}

void HgaParams::validate() const {
  if (d_v == 0 || heads == 0 || d_out == 0 || hidden == 0)
    throw std::invalid_argument("HgaParams: dims must be positive");
  if (d_v % heads != 0)
    throw std::invalid_argument("HgaParams: heads must divide d_v");
  require_shape(w_q, {d_v, d_v}, "w_q");
  require_shape(w_k, {d_v, d_v}, "w_k");
  require_shape(w_v, {d_v, d_v}, "w_v");
  require_shape(w_o, {d_v, d_v}, "w_o");
  require_shape(b_o, {d_v}, "b_o");
  require_shape(w1, {hidden, 3 * d_v}, "w1");
  require_shape(b1, {hidden}, "b1");
  require_shape(w2, {d_out, hidden}, "w2");
  require_shape(b2, {d_out}, "b2");
}

std::vector<std::vector<int>> map_landmarks_to_patches(const LandmarkSet& lm, const RoiSpec& roi,
                                                       std::size_t grid_h, std::size_t grid_w,
                                                       double frame_h, double frame_w) {
  if (grid_h == 0 || grid_w == 0 || !(frame_h > 0.0) || !(frame_w > 0.0))
    throw std::invalid_argument("map_landmarks_to_patches: dims must be positive");
  roi.validate(lm.count());
  require_finite(lm.points, "landmark coordinates");
  const double cell_h = frame_h / (double)grid_h;
  const double cell_w = frame_w / (double)grid_w;
  std::vector<std::vector<int>> sets;
  sets.reserve(roi.count());
  for (const RoiSpec::Region& region : roi.regions) {
    std::vector<int> patches;
    for (int id : region.landmark_ids) {
      // Clamp into the frame first, then clamp the cell index; both are
      // needed so (frame_w - epsilon) and huge coordinates land on the grid.
      const double x = std::clamp(lm.points(id, 0), 0.0, frame_w - 1.0);
      const double y = std::clamp(lm.points(id, 1), 0.0, frame_h - 1.0);
      const long row = std::clamp((long)std::floor(y / cell_h), 0l, (long)grid_h - 1);
      const long col = std::clamp((long)std::floor(x / cell_w), 0l, (long)grid_w - 1);
      patches.push_back((int)(row * (long)grid_w + col));
    }
    std::sort(patches.begin(), patches.end());
    patches.erase(std::unique(patches.begin(), patches.end()), patches.end());
    sets.push_back(std::move(patches));
  }
  return sets;
}

Tensor pool_local(const PatchGrid& grid, const std::vector<int>& patch_ids) {
  grid.validate();
  if (patch_ids.empty()) throw std::invalid_argument("pool_local: empty patch set");
  const std::size_t d_v = grid.token_dim();
  Tensor out({d_v});
  for (int id : patch_ids) {
    if (id < 0 || (std::size_t)id >= grid.num_patches())
      throw std::invalid_argument("pool_local: patch index out of range");
    const double* row = grid.tokens.data() + (std::size_t)id * d_v;
    for (std::size_t i = 0; i < d_v; ++i) out[i] += row[i];
  }
  for (std::size_t i = 0; i < d_v; ++i) out[i] /= (double)patch_ids.size();
  require_finite(out, "pool_local output");
  return out;
}

Tensor pool_global(const PatchGrid& grid) {
  grid.validate();
  const std::size_t n = grid.num_patches(), d_v = grid.token_dim();
  Tensor out({d_v});
  for (std::size_t j = 0; j < n; ++j) {
    const double* row = grid.tokens.data() + j * d_v;
    for (std::size_t i = 0; i < d_v; ++i) out[i] += row[i];
  }
  for (std::size_t i = 0; i < d_v; ++i) out[i] /= (double)n;
  require_finite(out, "pool_global output");
  return out;
}

namespace {

// Attention of one projected query over projected tokens; writes the
// concatenated head outputs and optionally the per-head weights.
void attend(const Tensor& q, const Tensor& k_proj, const Tensor& v_proj, std::size_t heads,
            double* out, double* att_out) {
  const std::size_t n = k_proj.dim(0), d_v = k_proj.dim(1), d_k = d_v / heads;
  const double scale = 1.0 / std::sqrt((double)d_k);
  std::vector<double> att(n);
  for (std::size_t head = 0; head < heads; ++head) {
    const std::size_t off = head * d_k;
    for (std::size_t j = 0; j < n; ++j)
      att[j] = dot(q.data() + off, k_proj.data() + j * d_v + off, d_k) * scale;
    softmax_inplace(att.data(), n);
    for (std::size_t i = 0; i < d_k; ++i) out[off + i] = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double* v_row = v_proj.data() + j * d_v + off;
      for (std::size_t i = 0; i < d_k; ++i) out[off + i] += att[j] * v_row[i];
    }
    if (att_out)
      for (std::size_t j = 0; j < n; ++j) att_out[head * n + j] = att[j];
  }
}

double activation(const HgaParams& p, double x) {
  return p.act == HgaParams::Act::kSilu ? silu(x) : x;
}

double activation_grad(const HgaParams& p, double x) {
  return p.act == HgaParams::Act::kSilu ? silu_grad(x) : 1.0;
}

Tensor hga_impl(const PatchGrid& grid, const LandmarkSet& lm, const RoiSpec& roi,
                const HgaParams& p, HgaContext* ctx) {
  check_frame_inputs(grid, lm, roi, p);
  const std::size_t m_regions = roi.count(), n = grid.num_patches(), d_v = p.d_v;
  const auto patch_sets =
      map_landmarks_to_patches(lm, roi, grid.grid_h, grid.grid_w, lm.frame_h, lm.frame_w);

  const Tensor none;
  const Tensor k_proj = linear_rows(p.w_k, grid.tokens, none);
  const Tensor v_proj = linear_rows(p.w_v, grid.tokens, none);
  const Tensor f_glob = pool_global(grid);

  if (ctx) {
    ctx->patch_sets = patch_sets;
    ctx->k_proj = k_proj;
    ctx->v_proj = v_proj;
    ctx->f_glob = f_glob;
    ctx->f_loc = Tensor({m_regions, d_v});
    ctx->q = Tensor({m_regions, d_v});
    ctx->att = Tensor({m_regions, p.heads, n});
    ctx->o = Tensor({m_regions, d_v});
    ctx->f_hat = Tensor({m_regions, d_v});
    ctx->cat = Tensor({m_regions, 3 * d_v});
    ctx->pre = Tensor({m_regions, p.hidden});
    ctx->hid = Tensor({m_regions, p.hidden});
  }

  Tensor out({m_regions, p.d_out});
  Tensor o({d_v}), cat({3 * d_v});
  for (std::size_t m = 0; m < m_regions; ++m) {
    const Tensor f_loc = pool_local(grid, patch_sets[m]);
    const Tensor q = linear(p.w_q, f_loc, none);
    attend(q, k_proj, v_proj, p.heads, o.data(),
           ctx ? ctx->att.data() + m * p.heads * n : nullptr);
    const Tensor f_hat = linear(p.w_o, o, p.b_o);
    for (std::size_t i = 0; i < d_v; ++i) {
      cat[i] = f_hat[i];
      cat[d_v + i] = f_loc[i];
      cat[2 * d_v + i] = f_glob[i];
    }
    for (std::size_t h = 0; h < p.hidden; ++h) {
      const double pre = dot(p.w1.data() + h * 3 * d_v, cat.data(), 3 * d_v) + p.b1[h];
      const double hid = activation(p, pre);
      if (ctx) {
        ctx->pre(m, h) = pre;
        ctx->hid(m, h) = hid;
      }
      for (std::size_t oidx = 0; oidx < p.d_out; ++oidx)
        out(m, oidx) += p.w2(oidx, h) * hid;
    }
    for (std::size_t oidx = 0; oidx < p.d_out; ++oidx) out(m, oidx) += p.b2[oidx];
    if (ctx) {
      for (std::size_t i = 0; i < d_v; ++i) {
        ctx->f_loc(m, i) = f_loc[i];
        ctx->q(m, i) = q[i];
        ctx->o(m, i) = o[i];
        ctx->f_hat(m, i) = f_hat[i];
      }
      for (std::size_t i = 0; i < 3 * d_v; ++i) ctx->cat(m, i) = cat[i];
    }
  }
  require_finite(out, "hga output");
  return out;
}

}  // namespace

Tensor mhca(const Tensor& query, const Tensor& keys_values, const HgaParams& p) {
  p.validate();
  if (query.rank() != 1 || query.dim(0) != p.d_v)
    throw std::invalid_argument("mhca: query must be [D_v], got " + query.shape_str());
  if (keys_values.rank() != 2 || keys_values.dim(1) != p.d_v)
    throw std::invalid_argument("mhca: keys_values must be [N_v, D_v], got " +
                                keys_values.shape_str());
  const Tensor none;
  const Tensor k_proj = linear_rows(p.w_k, keys_values, none);
  const Tensor v_proj = linear_rows(p.w_v, keys_values, none);
  const Tensor q = linear(p.w_q, query, none);
  Tensor o({p.d_v});
  attend(q, k_proj, v_proj, p.heads, o.data(), nullptr);
  return linear(p.w_o, o, p.b_o);
}

Tensor fuse_region(const Tensor& f_attended, const Tensor& f_local, const Tensor& f_global,
                   const HgaParams& p) {
  p.validate();
  if (f_attended.rank() != 1 || f_attended.dim(0) != p.d_v || !f_local.same_shape(f_attended) ||
      !f_global.same_shape(f_attended))
    throw std::invalid_argument("fuse_region: want three [D_v] inputs");
  Tensor cat({3 * p.d_v});
  for (std::size_t i = 0; i < p.d_v; ++i) {
    cat[i] = f_attended[i];
    cat[p.d_v + i] = f_local[i];
    cat[2 * p.d_v + i] = f_global[i];
  }
  Tensor hid({p.hidden});
  for (std::size_t h = 0; h < p.hidden; ++h)
    hid[h] = activation(p, dot(p.w1.data() + h * 3 * p.d_v, cat.data(), 3 * p.d_v) + p.b1[h]);
  return linear(p.w2, hid, p.b2);
}

Tensor hga_forward(const PatchGrid& grid, const LandmarkSet& lm, const RoiSpec& roi,
                   const HgaParams& p) {
  return hga_impl(grid, lm, roi, p, nullptr);
}

Tensor hga_forward_train(const PatchGrid& grid, const LandmarkSet& lm, const RoiSpec& roi,
                         const HgaParams& p, HgaContext& ctx) {
  return hga_impl(grid, lm, roi, p, &ctx);
}

HgaGrads HgaGrads::zeros_like(const HgaParams& p, std::size_t num_patches) {
  HgaGrads g;
  g.w_q = Tensor(p.w_q.shape());
  g.w_k = Tensor(p.w_k.shape());
  g.w_v = Tensor(p.w_v.shape());
  g.w_o = Tensor(p.w_o.shape());
  g.b_o = Tensor(p.b_o.shape());
  g.w1 = Tensor(p.w1.shape());
  g.b1 = Tensor(p.b1.shape());
  g.w2 = Tensor(p.w2.shape());
  g.b2 = Tensor(p.b2.shape());
  g.tokens = Tensor({num_patches, p.d_v});
  return g;
}

void hga_backward(const PatchGrid& grid, const HgaParams& p, const HgaContext& ctx,
                  const Tensor& grad_out, HgaGrads& g) {
  grid.validate();
  p.validate();
  const std::size_t m_regions = ctx.f_loc.dim(0), n = grid.num_patches(), d_v = p.d_v;
  const std::size_t d_k = d_v / p.heads;
  const double scale = 1.0 / std::sqrt((double)d_k);
  if (grad_out.rank() != 2 || grad_out.dim(0) != m_regions || grad_out.dim(1) != p.d_out)
    throw std::invalid_argument("hga_backward: grad_out must be [M, d_out], got " +
                                grad_out.shape_str());
  if (!g.tokens.same_shape(grid.tokens))
    throw std::invalid_argument("hga_backward: grads sized for a different grid");

  Tensor d_k_proj({n, d_v}), d_v_proj({n, d_v});
  std::vector<double> d_f_glob(d_v, 0.0);
  std::vector<double> d_hid(p.hidden), d_pre(p.hidden), d_cat(3 * d_v), d_f_hat(d_v), d_o(d_v),
      d_q(d_v), d_f_loc(d_v), d_att(n), d_logit(n);

  for (std::size_t m = 0; m < m_regions; ++m) {
    const double* go = grad_out.data() + m * p.d_out;

    // Fusion MLP.
    for (std::size_t h = 0; h < p.hidden; ++h) {
      double acc = 0.0;
      for (std::size_t oidx = 0; oidx < p.d_out; ++oidx) acc += p.w2(oidx, h) * go[oidx];
      d_hid[h] = acc;
      d_pre[h] = acc * activation_grad(p, ctx.pre(m, h));
    }
    for (std::size_t oidx = 0; oidx < p.d_out; ++oidx) {
      for (std::size_t h = 0; h < p.hidden; ++h) g.w2(oidx, h) += go[oidx] * ctx.hid(m, h);
      g.b2[oidx] += go[oidx];
    }
    for (std::size_t j = 0; j < 3 * d_v; ++j) d_cat[j] = 0.0;
    for (std::size_t h = 0; h < p.hidden; ++h) {
      const double* w1_row = p.w1.data() + h * 3 * d_v;
      double* gw1_row = g.w1.data() + h * 3 * d_v;
      const double dp = d_pre[h];
      for (std::size_t j = 0; j < 3 * d_v; ++j) {
        d_cat[j] += w1_row[j] * dp;
        gw1_row[j] += dp * ctx.cat(m, j);
      }
      g.b1[h] += dp;
    }
    for (std::size_t i = 0; i < d_v; ++i) {
      d_f_hat[i] = d_cat[i];
      d_f_loc[i] = d_cat[d_v + i];
      d_f_glob[i] += d_cat[2 * d_v + i];
    }

    // Output projection f_hat = W_o o + b_o.
    for (std::size_t i = 0; i < d_v; ++i) d_o[i] = 0.0;
    for (std::size_t i = 0; i < d_v; ++i) {
      const double* wo_row = p.w_o.data() + i * d_v;
      double* gwo_row = g.w_o.data() + i * d_v;
      const double dfh = d_f_hat[i];
      for (std::size_t k = 0; k < d_v; ++k) {
        d_o[k] += wo_row[k] * dfh;
        gwo_row[k] += dfh * ctx.o(m, k);
      }
      g.b_o[i] += dfh;
    }

    // Attention heads.
    for (std::size_t i = 0; i < d_v; ++i) d_q[i] = 0.0;
    for (std::size_t head = 0; head < p.heads; ++head) {
      const std::size_t off = head * d_k;
      const double* att = ctx.att.data() + (m * p.heads + head) * n;
      double att_dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double* v_row = ctx.v_proj.data() + j * d_v + off;
        d_att[j] = dot(d_o.data() + off, v_row, d_k);
        att_dot += d_att[j] * att[j];
        double* dv_row = d_v_proj.data() + j * d_v + off;
        for (std::size_t i = 0; i < d_k; ++i) dv_row[i] += att[j] * d_o[off + i];
      }
      for (std::size_t j = 0; j < n; ++j) d_logit[j] = att[j] * (d_att[j] - att_dot);
      for (std::size_t j = 0; j < n; ++j) {
        const double* k_row = ctx.k_proj.data() + j * d_v + off;
        double* dk_row = d_k_proj.data() + j * d_v + off;
        const double dl = d_logit[j] * scale;
        for (std::size_t i = 0; i < d_k; ++i) {
          d_q[off + i] += dl * k_row[i];
          dk_row[i] += dl * ctx.q(m, off + i);
        }
      }
    }

    // q = W_q f_loc.
    for (std::size_t i = 0; i < d_v; ++i) {
      const double* wq_row = p.w_q.data() + i * d_v;
      double* gwq_row = g.w_q.data() + i * d_v;
      const double dq = d_q[i];
      for (std::size_t k = 0; k < d_v; ++k) {
        d_f_loc[k] += wq_row[k] * dq;
        gwq_row[k] += dq * ctx.f_loc(m, k);
      }
    }

    // Local pooling spreads the gradient evenly over the region's patches.
    const std::vector<int>& patches = ctx.patch_sets[m];
    const double inv = 1.0 / (double)patches.size();
    for (int id : patches) {
      double* row = g.tokens.data() + (std::size_t)id * d_v;
      for (std::size_t i = 0; i < d_v; ++i) row[i] += d_f_loc[i] * inv;
    }
  }

  // K = tokens W_k^T rows, V likewise.
  for (std::size_t j = 0; j < n; ++j) {
    const double* f_row = grid.tokens.data() + j * d_v;
    double* gt_row = g.tokens.data() + j * d_v;
    const double* dk_row = d_k_proj.data() + j * d_v;
    const double* dv_row = d_v_proj.data() + j * d_v;
    for (std::size_t i = 0; i < d_v; ++i) {
      const double* wk_row = p.w_k.data() + i * d_v;
      const double* wv_row = p.w_v.data() + i * d_v;
      double* gwk_row = g.w_k.data() + i * d_v;
      double* gwv_row = g.w_v.data() + i * d_v;
      const double dki = dk_row[i], dvi = dv_row[i];
      for (std::size_t k = 0; k < d_v; ++k) {
        gwk_row[k] += dki * f_row[k];
        gwv_row[k] += dvi * f_row[k];
        gt_row[k] += wk_row[k] * dki + wv_row[k] * dvi;
      }
    }
  }

  // Global pooling.
  const double inv_n = 1.0 / (double)n;
  for (std::size_t j = 0; j < n; ++j) {
    double* row = g.tokens.data() + j * d_v;
    for (std::size_t i = 0; i < d_v; ++i) row[i] += d_f_glob[i] * inv_n;
  }
  require_finite(g.tokens, "hga_backward token grads");
}

}  // namespace agssm
