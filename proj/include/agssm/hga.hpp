#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "agssm/rng.hpp"
#include "agssm/tensor.hpp"

namespace agssm {

// 2-d facial landmarks in pixel coordinates of a frame_h x frame_w frame.
struct LandmarkSet {
  Tensor points;  // [K, 2], columns are (x, y)
  double frame_h = 224.0;
  double frame_w = 224.0;
  std::size_t count() const { return points.dim(0); }
};

// Named landmark groups defining the regions of interest.
struct RoiSpec {
  struct Region {
    std::string name;
    std::vector<int> landmark_ids;
  };
  std::vector<Region> regions;

  std::size_t count() const { return regions.size(); }
  // Seven groups over the standard 68-point layout.
  static RoiSpec default_face68();
  // One region per line: "name: id id id ...".
  static RoiSpec parse(const std::string& text);
  void validate(std::size_t num_landmarks) const;
};

// Patch tokens on an h x w grid, one frame.
struct PatchGrid {
  std::size_t grid_h = 0, grid_w = 0;
  Tensor tokens;  // [grid_h * grid_w, D_v]
  std::size_t num_patches() const { return grid_h * grid_w; }
  std::size_t token_dim() const { return tokens.dim(1); }
  void validate() const;
};

struct HgaParams {
  std::size_t d_v = 0;    // token width
  std::size_t heads = 0;  // heads * d_k = d_v
  std::size_t d_out = 0;  // fused region descriptor width
  std::size_t hidden = 0; // fusion MLP width

  // Attention projections, head slices stacked along rows: row block
  // [i*d_k, (i+1)*d_k) is head i.
  Tensor w_q, w_k, w_v;  // [D_v, D_v]
  Tensor w_o, b_o;       // [D_v, D_v], [D_v]
  // Fusion MLP over [attended; local; global].
  Tensor w1, b1;  // [hidden, 3*D_v], [hidden]
  Tensor w2, b2;  // [d_out, hidden], [d_out]
  // Identity keeps the constructed-weight fixtures hand-checkable.
  enum class Act { kSilu, kIdentity };
  Act act = Act::kSilu;

  static HgaParams create(std::size_t d_v, std::size_t heads, std::size_t d_out,
                          std::size_t hidden);
  void init(Rng& rng);
  void validate() const;

  template <typename F>
  void for_each_param(F&& f) {
    f("w_q", w_q);
    f("w_k", w_k);
    f("w_v", w_v);
    f("w_o", w_o);
    f("b_o", b_o);
    f("w1", w1);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
  }
};

// Landmark -> patch index on the grid: floor(y / (frame_h / grid_h)) row,
// floor(x / (frame_w / grid_w)) column, clamped to the grid. One patch set
// per region, sorted and deduplicated.
std::vector<std::vector<int>> map_landmarks_to_patches(const LandmarkSet& lm, const RoiSpec& roi,
                                                       std::size_t grid_h, std::size_t grid_w,
                                                       double frame_h, double frame_w);

// Mean of the tokens named by patch_ids; ids must be valid and non-empty.
Tensor pool_local(const PatchGrid& grid, const std::vector<int>& patch_ids);
// Mean over all tokens.
Tensor pool_global(const PatchGrid& grid);

// Multi-head cross-attention of one query vector over the token rows:
// per head, softmax(<W_q q, W_k token> / sqrt(d_k)) weights the value
// projections; heads are concatenated, then output-projected.
Tensor mhca(const Tensor& query, const Tensor& keys_values, const HgaParams& p);

// Fusion MLP over the concatenated granularities -> [d_out].
Tensor fuse_region(const Tensor& f_attended, const Tensor& f_local, const Tensor& f_global,
                   const HgaParams& p);

// Full per-frame pipeline -> [M, d_out], one row per region.
Tensor hga_forward(const PatchGrid& grid, const LandmarkSet& lm, const RoiSpec& roi,
                   const HgaParams& p);

// Saved activations for one frame.
struct HgaContext {
  std::vector<std::vector<int>> patch_sets;
  Tensor k_proj, v_proj;  // [N_v, D_v]
  Tensor f_loc;           // [M, D_v]
  Tensor f_glob;          // [D_v]
  Tensor q;               // [M, D_v]
  Tensor att;             // [M, heads, N_v]
  Tensor o;               // [M, D_v] concatenated head outputs
  Tensor f_hat;           // [M, D_v]
  Tensor cat;             // [M, 3*D_v]
  Tensor pre;             // [M, hidden] pre-activation
  Tensor hid;             // [M, hidden]
};

Tensor hga_forward_train(const PatchGrid& grid, const LandmarkSet& lm, const RoiSpec& roi,
                         const HgaParams& p, HgaContext& ctx);

struct HgaGrads {
  Tensor w_q, w_k, w_v, w_o, b_o, w1, b1, w2, b2;
  Tensor tokens;  // [N_v, D_v]
  static HgaGrads zeros_like(const HgaParams& p, std::size_t num_patches);

  template <typename F>
  void for_each_param(F&& f) {
    f("w_q", w_q);
    f("w_k", w_k);
    f("w_v", w_v);
    f("w_o", w_o);
    f("b_o", b_o);
    f("w1", w1);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
  }
};

// grad_out: [M, d_out]; accumulates parameter grads and token grads.
void hga_backward(const PatchGrid& grid, const HgaParams& p, const HgaContext& ctx,
                  const Tensor& grad_out, HgaGrads& g);

}  // namespace agssm
