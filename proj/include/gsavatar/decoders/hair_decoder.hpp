#pragma once

#include "gsavatar/config.hpp"
#include "gsavatar/core/nn.hpp"
#include "gsavatar/decoders/face_decoder.hpp"
#include "gsavatar/decoders/strands.hpp"
#include "gsavatar/geometry/gaussians.hpp"

namespace gsavatar {

// Sinusoidal strand generator: maps per-scalp-pixel features modulated by the
// hair tokens to S direction vectors. Trainable end to end.
struct StrandGenerator {
  Linear g1, g2, g3;
  real omega = 3.0;
  real out_scale = 0.02;
  long segments = 64;

  static StrandGenerator create(ParamStore& ps, const std::string& prefix, long in_dim,
                                long hidden, long segments, real dir_scale, Rng& rng) {
    StrandGenerator g;
    g.segments = segments;
    g.out_scale = dir_scale;
    g.g1 = Linear::create(ps, prefix + ".g1", in_dim, hidden, rng);
    g.g2 = Linear::create(ps, prefix + ".g2", hidden, hidden, rng);
    g.g3 = Linear::create(ps, prefix + ".g3", hidden, 3 * segments, rng);
    return g;
  }

  // z: (M, C) -> directions (M*S, 3)
  Var forward(const Var& z) const {
    Var h = sin_op(mul_scalar(g1.forward(z), omega));
    h = sin_op(mul_scalar(g2.forward(h), omega));
    Var raw = mul_scalar(g3.forward(h), out_scale);
    return reshape(raw, raw->val.rows() * segments, 3);
  }
};

// directions from gamma_coeff * T_hair + hair_base; gamma_coeff = 0 decodes
// from the raw scalp features alone.
inline Var decode_directions(const StrandGenerator& gen, const Var& t_hair, const Var& hair_base,
                             real gamma_coeff) {
  GS_CHECK(t_hair->val.rows() == hair_base->val.rows() &&
               t_hair->val.cols() == hair_base->val.cols(),
           "decode_directions: grid mismatch");
  return gen.forward(add(mul_scalar(t_hair, gamma_coeff), hair_base));
}

struct HairDecoder {
  StrandGenerator gen;
  Linear op1, op2, col1, col2;

  static HairDecoder create(ParamStore& ps, const std::string& prefix, const Config& cfg,
                            Rng& rng) {
    HairDecoder d;
    long C = cfg.embed_dim, h = std::max<long>(8, C / 2);
    d.gen = StrandGenerator::create(ps, prefix + ".gen", C, h, cfg.strand_count, cfg.dir_scale,
                                    rng);
    d.op1 = Linear::create(ps, prefix + ".op1", C, h, rng);
    d.op2 = Linear::create(ps, prefix + ".op2", h, 1, rng);
    d.col1 = Linear::create(ps, prefix + ".col1", C, h, rng);
    d.col2 = Linear::create(ps, prefix + ".col2", h, 3, rng);
    return d;
  }

  // per-scalp-pixel opacity and color, shared by that strand's segments
  std::pair<Var, Var> appearance(const Var& t_hair) const {
    Var a = sigmoid(op2.forward(gelu(op1.forward(t_hair))));
    Var c = sigmoid(col2.forward(gelu(col1.forward(t_hair))));
    return {a, c};
  }
};

// Unit quaternion rotating +x onto each row direction by the minimal arc,
// built from primitives so gradients flow into the directions.
inline Var quat_from_directions(const Var& dirs) {
  Var dhat = l2normalize_rows(dirs);
  Var zero = constant(Tensor(dirs->val.rows(), 1));
  Var w = add_scalar(slice_cols(dhat, 0, 1), 1.0);
  Var y = mul_scalar(slice_cols(dhat, 2, 3), -1.0);
  Var z = slice_cols(dhat, 1, 2);
  return l2normalize_rows(concat_cols({w, zero, y, z}));
}

struct HairBranchResult {
  GaussianVars gauss;
  real mean_len = 0;
  HairClass cls = HairClass::Medium;
  long seg_count = 0;      // S' after adaptive sampling
  real radius = 0;         // r' after adaptive sampling
  std::vector<long> kept;  // kept scalp pixel slots (into valid list)
  std::vector<long> pixel_of_gaussian;  // per output row, source pixel slot
};

// Full hair branch: directions -> classify -> density sampling -> group
// aggregation -> rigid root-follow posing -> segment Gaussians + appearance.
//
// canonical/posed frames come from the scalp binding; strands follow their
// root triangle rigidly under expression change.
inline HairBranchResult hair_branch(const HairDecoder& dec, const Var& t_hair,
                                    const Var& hair_base, const BindingTable& scalp_bind,
                                    const BoundFrames& canonical, const BoundFrames& posed,
                                    const SamplerConfig& scfg, real gamma_coeff, real base_radius,
                                    real drop_eps, uint64_t seed) {
  long M = scalp_bind.valid_count();
  GS_CHECK(t_hair->val.rows() == M, "hair_branch: token rows != valid scalp pixels");
  long S = dec.gen.segments;

  HairBranchResult res;
  Var dirs_full = decode_directions(dec.gen, t_hair, hair_base, gamma_coeff);
  res.mean_len = mean_strand_length(dirs_full->val, S, scfg.hair_len_scale);
  res.cls = classify_hair(res.mean_len, scfg);
  res.seg_count = adaptive_segment_count(res.mean_len, scfg);
  res.radius = adaptive_radius(res.mean_len, base_radius, scfg);

  // coarse density = clamped last channel of the raw scalp features
  std::vector<real> density(static_cast<size_t>(M));
  long dcol = hair_base->val.cols() - 1;
  for (long m = 0; m < M; ++m) density[size_t(m)] = std::max(real(0), hair_base->val(m, dcol));
  Rng rng(seed, 77);
  res.kept = density_keep_mask(density, res.cls, scfg, rng);

  long Sp = res.seg_count;
  Var agg = aggregate_directions(dirs_full, S, res.kept, Sp);  // (Nk*Sp, 3)
  long Nk = long(res.kept.size());

  // rigid root-follow: rotate canonical directions by the frame delta and
  // anchor at the posed root
  auto rots = std::make_shared<std::vector<Mat3>>();
  rots->reserve(size_t(Nk * Sp));
  Tensor roots(Nk * Sp, 3);
  std::vector<long> px_of_row(size_t(Nk * Sp));
  for (long j = 0; j < Nk; ++j) {
    long m = res.kept[size_t(j)];
    Mat3 rel = (*posed.rot)[size_t(m)] * (*canonical.rot)[size_t(m)].transpose();
    for (long s = 0; s < Sp; ++s) {
      rots->push_back(rel);
      for (long c = 0; c < 3; ++c) roots(j * Sp + s, c) = posed.origins(m, c);
      px_of_row[size_t(j * Sp + s)] = m;
    }
  }
  Var dirs = rowwise_rotate_const(rots, agg);

  // drop zero-length segments before the Gaussian parametrization
  std::vector<long> live;
  for (long r = 0; r < Nk * Sp; ++r) {
    Vec3 d(dirs->val(r, 0), dirs->val(r, 1), dirs->val(r, 2));
    if (d.norm() >= drop_eps) live.push_back(r);
  }
  GS_CHECK(!live.empty(), "hair_branch: every segment degenerate");

  // midpoint = root + prefix_sum - d/2, per strand block
  Var csum = prefix_sum_blocks(dirs, Sp);
  Var mid = sub(add(constant(std::move(roots)), csum), mul_scalar(dirs, 0.5));

  Var mid_l = gather_rows(mid, live);
  Var dirs_l = gather_rows(dirs, live);
  Tensor rcols(long(live.size()), 2);
  rcols.fill(res.radius);
  Var scale = concat_cols({mul_scalar(row_norm(dirs_l), 0.5), constant(std::move(rcols))});
  Var quat = quat_from_directions(dirs_l);

  auto [alpha_px, color_px] = dec.appearance(t_hair);
  std::vector<long> pick(live.size());
  for (size_t i = 0; i < live.size(); ++i) pick[i] = px_of_row[size_t(live[i])];
  Var alpha = gather_rows(alpha_px, pick);
  Var color = gather_rows(color_px, pick);

  res.gauss = {mid_l, scale, quat, alpha, color};
  res.pixel_of_gaussian = std::move(pick);
  return res;
}

}  // namespace gsavatar
