#pragma once

#include "gsavatar/config.hpp"
#include "gsavatar/core/nn.hpp"
#include "gsavatar/core/ops_image.hpp"
#include "gsavatar/geometry/gaussians.hpp"

namespace gsavatar {

// Decoded per-pixel Gaussian attributes in triangle-frame coordinates,
// restricted to valid UV pixels.
struct DecodedLocal {
  Var dpos;     // (M,3), ‖row‖ ≤ offset_bound
  Var sigma;    // (M,3), floor ≤ sigma, third axis planar-capped
  Var quat;     // (M,4), unit
  Var opacity;  // (M,1), in (0,1)
  Var color;    // (M,3), in (0,1)

  LocalGaussians plain() const {
    return {dpos->val, sigma->val, quat->val, opacity->val, color->val};
  }
};

// Shared 3x3 conv trunk over the token grid, then five per-pixel MLP heads
// with range-enforcing activations.
struct FaceDecoder {
  Var tw1, tb1, tw2, tb2;
  Linear off1, off2, sc1, sc2, rot1, rot2, op1, op2, col1, col2;
  real offset_bound = 1.0, sigma_floor = 1e-4, sigma_cap = 1.5;

  static FaceDecoder create(ParamStore& ps, const std::string& prefix, const Config& cfg,
                            Rng& rng) {
    FaceDecoder d;
    long C = cfg.embed_dim, h = std::max<long>(8, C / 2);
    d.offset_bound = cfg.offset_bound;
    d.sigma_floor = cfg.sigma_floor;
    d.sigma_cap = cfg.sigma_cap;
    d.tw1 = ps.add(prefix + ".t1.w", xavier_init(C, C * 9, rng));
    d.tb1 = ps.add(prefix + ".t1.b", Tensor(1, C));
    d.tw2 = ps.add(prefix + ".t2.w", xavier_init(C, C * 9, rng));
    d.tb2 = ps.add(prefix + ".t2.b", Tensor(1, C));
    auto head = [&](const char* name, Linear& a, Linear& b, long out) {
      a = Linear::create(ps, prefix + "." + name + "1", C, h, rng);
      b = Linear::create(ps, prefix + "." + name + "2", h, out, rng);
    };
    head("off", d.off1, d.off2, 3);
    head("scale", d.sc1, d.sc2, 3);
    head("rot", d.rot1, d.rot2, 4);
    head("op", d.op1, d.op2, 1);
    head("col", d.col1, d.col2, 3);
    return d;
  }

  // t_head: (H*W, C) grid tokens. Returns attributes for valid pixels only.
  DecodedLocal decode(const Var& t_head, long H, long W, const BindingTable& bind) const {
    for (real x : t_head->val.v) GS_CHECK(std::isfinite(x), "face decoder: non-finite token");
    Var grid = transpose(t_head);
    grid = gelu(conv2d(grid, tw1, tb1, H, W, 3, 1, 1));
    grid = gelu(conv2d(grid, tw2, tb2, H, W, 3, 1, 1));
    Var rows = gather_rows(transpose(grid), bind.valid);

    DecodedLocal out;
    // per-component tanh bound keeps the offset norm within offset_bound
    out.dpos = mul_scalar(tanh_op(off2.forward(gelu(off1.forward(rows)))),
                          offset_bound / std::sqrt(3.0));
    // softplus shifted so zero weights land exactly on the floor, then
    // squashed so each axis stays below its cap (third axis planar)
    Var u = relu(add_scalar(softplus(sc2.forward(gelu(sc1.forward(rows)))), -std::log(2.0)));
    Var frac = mul(u, reciprocal(add_scalar(u, 1.0)));
    Tensor caps(1, 3);
    caps(0, 0) = sigma_cap - sigma_floor;
    caps(0, 1) = sigma_cap - sigma_floor;
    caps(0, 2) = 0.2 * sigma_cap - sigma_floor;
    out.sigma = add_scalar(mul_broadcast_row(frac, constant(std::move(caps))), sigma_floor);
    Tensor qid(1, 4);
    qid(0, 0) = 1.0;
    out.quat = l2normalize_rows(
        add_broadcast_row(rot2.forward(gelu(rot1.forward(rows))), constant(std::move(qid))));
    out.opacity = sigmoid(op2.forward(gelu(op1.forward(rows))));
    out.color = sigmoid(col2.forward(gelu(col1.forward(rows))));
    return out;
  }
};

struct GaussianVars {
  Var pos, scale, quat, opacity, color;

  long count() const { return pos->val.rows(); }

  GaussianSet plain(Semantic sem) const {
    GaussianSet g{pos->val, scale->val, quat->val, opacity->val, color->val, {}};
    g.semantic.assign(size_t(count()), uint8_t(sem));
    return g;
  }
};

inline GaussianVars face_branch(const DecodedLocal& local, const BoundFrames& frames) {
  PosedVars posed = bind_and_pose_vars(local.dpos, local.sigma, local.quat, frames);
  return {posed.pos, posed.scale, posed.quat, local.opacity, local.color};
}

}  // namespace gsavatar
