#pragma once

#include "gsavatar/core/graph.hpp"
#include "gsavatar/core/rng.hpp"
#include "gsavatar/geometry/frames.hpp"

namespace gsavatar {

// Strand-based hair geometry. A strand is a root point plus S direction
// vectors; vertices are prefix sums, and every segment becomes one elongated
// Gaussian: midpoint center, axes (|d|/2, r, r), rotation taking +x to the
// segment direction by the minimal arc.

inline Vec4 min_rotation_quat_from_x(const Vec3& dhat) {
  real w = 1.0 + dhat.x();
  if (w < 1e-12) return Vec4(0, 0, 0, 1);  // antiparallel: half-turn about z
  Vec4 q(w, 0, -dhat.z(), dhat.y());
  return q / q.norm();
}

// plain prefix-sum vertices: roots (N,3), dirs (N*S,3) -> (N*(S+1),3)
inline Tensor strand_vertices(const Tensor& roots, const Tensor& dirs, long S) {
  long N = roots.rows();
  GS_CHECK(dirs.rows() == N * S && dirs.cols() == 3, "strand_vertices: dirs shape");
  Tensor out(N * (S + 1), 3);
  for (long i = 0; i < N; ++i) {
    Vec3 v(roots(i, 0), roots(i, 1), roots(i, 2));
    for (long c = 0; c < 3; ++c) out(i * (S + 1), c) = v[c];
    for (long s = 0; s < S; ++s) {
      for (long c = 0; c < 3; ++c) v[c] += dirs(i * S + s, c);
      for (long c = 0; c < 3; ++c) out(i * (S + 1) + s + 1, c) = v[c];
    }
  }
  return out;
}

struct StrandGaussiansPlain {
  Tensor pos, scale, quat;  // (N*S,3), (N*S,3), (N*S,4)
};

inline StrandGaussiansPlain strand_gaussians_plain(const Tensor& roots, const Tensor& dirs, long S,
                                                   real radius) {
  long N = roots.rows();
  StrandGaussiansPlain out{Tensor(N * S, 3), Tensor(N * S, 3), Tensor(N * S, 4)};
  Tensor verts = strand_vertices(roots, dirs, S);
  for (long i = 0; i < N; ++i)
    for (long s = 0; s < S; ++s) {
      long r = i * S + s;
      Vec3 d(dirs(r, 0), dirs(r, 1), dirs(r, 2));
      real len = d.norm();
      for (long c = 0; c < 3; ++c)
        out.pos(r, c) = 0.5 * (verts(i * (S + 1) + s, c) + verts(i * (S + 1) + s + 1, c));
      out.scale(r, 0) = 0.5 * len;
      out.scale(r, 1) = radius;
      out.scale(r, 2) = radius;
      Vec4 q = len > 1e-12 ? min_rotation_quat_from_x(d / len) : Vec4(1, 0, 0, 0);
      for (long c = 0; c < 4; ++c) out.quat(r, c) = q[c];
    }
  return out;
}

// ---------------------------------------------------------------------------
// adaptive strand sampling

enum class HairClass { Short = 0, Medium = 1, Long = 2 };

struct SamplerConfig {
  real t_short = 0.15;
  real t_long = 0.22;
  real len_gain = 180.0;
  long seg_min = 8;
  long seg_max = 48;
  real short_density_scale = 1.235;
  real radius_gain = 1.0;
  real hair_len_scale = 0.3;
};

// normalized mean strand length: mean over strands of the summed segment
// lengths, scaled into classifier units
inline real mean_strand_length(const Tensor& dirs, long S, real hair_len_scale) {
  long N = dirs.rows() / S;
  GS_CHECK(N * S == dirs.rows(), "mean_strand_length: shape");
  real total = 0;
  for (long i = 0; i < N; ++i)
    for (long s = 0; s < S; ++s) {
      Vec3 d(dirs(i * S + s, 0), dirs(i * S + s, 1), dirs(i * S + s, 2));
      total += d.norm();
    }
  return hair_len_scale * total / real(N);
}

inline HairClass classify_hair(real mean_len, const SamplerConfig& cfg) {
  if (mean_len < cfg.t_short) return HairClass::Short;
  if (mean_len > cfg.t_long) return HairClass::Long;
  return HairClass::Medium;
}

inline long adaptive_segment_count(real mean_len, const SamplerConfig& cfg) {
  long s = long(std::lround(cfg.len_gain * mean_len));
  return std::clamp(s, cfg.seg_min, cfg.seg_max);
}

inline real adaptive_radius(real mean_len, real base_radius, const SamplerConfig& cfg) {
  if (classify_hair(mean_len, cfg) != HairClass::Short) return base_radius;
  real boost = cfg.radius_gain * std::max(real(0), cfg.t_short - mean_len) / cfg.t_short;
  return base_radius * (1.0 + boost);
}

// Bernoulli keep decisions from the scalp density map (normalized by its
// max); short hair gets a denser draw. Throws if no root survives.
inline std::vector<long> density_keep_mask(const std::vector<real>& density, HairClass cls,
                                           const SamplerConfig& cfg, Rng& rng) {
  GS_CHECK(!density.empty(), "density_keep_mask: empty density");
  real dmax = 0;
  for (real d : density) dmax = std::max(dmax, d);
  GS_CHECK(dmax > 0, "density_keep_mask: all-zero density map");
  real scale = cls == HairClass::Short ? cfg.short_density_scale : 1.0;
  std::vector<long> kept;
  for (size_t i = 0; i < density.size(); ++i) {
    real p = std::min(real(1), density[i] / dmax * scale);
    if (rng.bernoulli(p)) kept.push_back(long(i));
  }
  GS_CHECK(!kept.empty(), "density_keep_mask: sampler removed every strand");
  return kept;
}

// Segment boundaries that aggregate S directions into S' coarser ones while
// preserving the strand path: group k covers (b[k-1], b[k]].
inline std::vector<long> group_boundaries(long S, long Sp) {
  GS_CHECK(Sp >= 1 && Sp <= S, "group_boundaries: S' out of range");
  std::vector<long> b(static_cast<size_t>(Sp));
  for (long k = 0; k < Sp; ++k) b[size_t(k)] = (k + 1) * S / Sp - 1;
  GS_CHECK(b.back() == S - 1, "group_boundaries: last boundary");
  return b;
}

// Differentiable group aggregation: dirs (N*S,3) for the given kept strands
// -> (len(kept)*S',3), where each output direction is the sum of its group.
inline Var aggregate_directions(const Var& dirs, long S, const std::vector<long>& kept, long Sp) {
  Var csum = prefix_sum_blocks(dirs, S);
  std::vector<long> bnd = group_boundaries(S, Sp);
  std::vector<long> hi_idx, lo_idx;
  bool need_lo = false;
  for (long i : kept)
    for (long k = 0; k < Sp; ++k) {
      hi_idx.push_back(i * S + bnd[size_t(k)]);
      lo_idx.push_back(k == 0 ? i * S : i * S + bnd[size_t(k - 1)]);
      if (k > 0) need_lo = true;
    }
  Var hi = gather_rows(csum, hi_idx);
  if (!need_lo && Sp == 1) return hi;  // single group: cumulative end is the sum
  // subtract the previous boundary; for k = 0 subtract zero by reusing the
  // first row of the block minus itself
  Tensor mask(long(lo_idx.size()), 1);
  std::vector<long> lo_gather(lo_idx.size());
  for (size_t j = 0; j < lo_idx.size(); ++j) {
    long k = long(j) % Sp;
    mask(long(j), 0) = k == 0 ? 0.0 : 1.0;
    lo_gather[j] = lo_idx[j];
  }
  Var lo = mul_broadcast_col(gather_rows(csum, lo_gather), constant(std::move(mask)));
  return sub(hi, lo);
}

}  // namespace gsavatar
