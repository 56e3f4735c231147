#pragma once

#include "gsavatar/core/graph.hpp"
#include "gsavatar/geometry/frames.hpp"
#include "gsavatar/geometry/uv.hpp"

namespace gsavatar {

enum class Semantic : uint8_t { Face = 0, Hair = 1 };

// World-space Gaussians ready for rasterization.
struct GaussianSet {
  Tensor pos;      // (M,3)
  Tensor scale;    // (M,3)
  Tensor quat;     // (M,4) wxyz, unit
  Tensor opacity;  // (M,1)
  Tensor color;    // (M,3)
  std::vector<uint8_t> semantic;

  long count() const { return pos.rows(); }
};

inline GaussianSet concat_sets(const GaussianSet& a, const GaussianSet& b) {
  GaussianSet out;
  long M = a.count() + b.count();
  out.pos = Tensor(M, 3);
  out.scale = Tensor(M, 3);
  out.quat = Tensor(M, 4);
  out.opacity = Tensor(M, 1);
  out.color = Tensor(M, 3);
  out.semantic.reserve(size_t(M));
  auto copy_rows = [](Tensor& dst, const Tensor& src, long at) {
    for (long r = 0; r < src.rows(); ++r)
      for (long c = 0; c < src.cols(); ++c) dst(at + r, c) = src(r, c);
  };
  copy_rows(out.pos, a.pos, 0);
  copy_rows(out.scale, a.scale, 0);
  copy_rows(out.quat, a.quat, 0);
  copy_rows(out.opacity, a.opacity, 0);
  copy_rows(out.color, a.color, 0);
  copy_rows(out.pos, b.pos, a.count());
  copy_rows(out.scale, b.scale, a.count());
  copy_rows(out.quat, b.quat, a.count());
  copy_rows(out.opacity, b.opacity, a.count());
  copy_rows(out.color, b.color, a.count());
  out.semantic.insert(out.semantic.end(), a.semantic.begin(), a.semantic.end());
  out.semantic.insert(out.semantic.end(), b.semantic.begin(), b.semantic.end());
  return out;
}

// Local Gaussian attributes per valid UV pixel, before mesh binding.
struct LocalGaussians {
  Tensor dpos;     // (M,3) frame-local offsets
  Tensor sigma;    // (M,3) frame-local scales
  Tensor quat;     // (M,4) local rotation, unit wxyz
  Tensor opacity;  // (M,1)
  Tensor color;    // (M,3)
};

// Per-valid-pixel frame data gathered from the binding table, ready to apply
// to local attributes. Rebuilt per expression from the posed mesh.
struct BoundFrames {
  Tensor origins;                          // (M,3) barycentric anchor points
  Tensor scales;                           // (M,1) triangle frame scale
  std::shared_ptr<std::vector<Mat3>> rot;  // (M) frame rotations
  std::shared_ptr<std::vector<Vec4>> quat; // (M) same rotations as quats
};

inline BoundFrames gather_frames(const BindingTable& bind, const Tensor& posed_verts,
                                 const std::vector<std::array<long, 3>>& faces,
                                 const std::vector<TriangleFrame>& frames) {
  long M = bind.valid_count();
  BoundFrames out;
  out.origins = bind.anchors(posed_verts, faces);
  out.scales = Tensor(M, 1);
  out.rot = std::make_shared<std::vector<Mat3>>();
  out.quat = std::make_shared<std::vector<Vec4>>();
  out.rot->reserve(size_t(M));
  out.quat->reserve(size_t(M));
  for (long m = 0; m < M; ++m) {
    long px = bind.valid[size_t(m)];
    long f = bind.face[size_t(px)];
    GS_CHECK(f >= 0, "gather_frames: invalid pixel consumed");
    GS_CHECK(size_t(f) < frames.size(), "gather_frames: face index out of range");
    const TriangleFrame& fr = frames[size_t(f)];
    out.scales(m, 0) = fr.scale;
    out.rot->push_back(fr.rot);
    out.quat->push_back(fr.quat);
  }
  return out;
}

// world pos   = anchor + frame_scale * R_frame * dpos
// world scale = frame_scale * sigma
// world rot   = quat_frame * quat_local
inline GaussianSet bind_and_pose(const LocalGaussians& g, const BoundFrames& fr,
                                 Semantic sem) {
  long M = g.dpos.rows();
  GS_CHECK(fr.origins.rows() == M, "bind_and_pose: pixel count mismatch");
  GaussianSet out;
  out.pos = Tensor(M, 3);
  out.scale = Tensor(M, 3);
  out.quat = Tensor(M, 4);
  out.opacity = g.opacity;
  out.color = g.color;
  out.semantic.assign(size_t(M), uint8_t(sem));
  for (long m = 0; m < M; ++m) {
    real s = fr.scales(m, 0);
    Vec3 d(g.dpos(m, 0), g.dpos(m, 1), g.dpos(m, 2));
    Vec3 p = Vec3(fr.origins(m, 0), fr.origins(m, 1), fr.origins(m, 2)) +
             s * ((*fr.rot)[size_t(m)] * d);
    Vec4 q = quat_multiply((*fr.quat)[size_t(m)],
                           Vec4(g.quat(m, 0), g.quat(m, 1), g.quat(m, 2), g.quat(m, 3)));
    for (int k = 0; k < 3; ++k) {
      out.pos(m, k) = p[k];
      out.scale(m, k) = s * g.sigma(m, k);
    }
    for (int k = 0; k < 4; ++k) out.quat(m, k) = q[k];
  }
  return out;
}

// Differentiable variant used by the decoders: local attributes are graph
// nodes, frames are constants of the current expression.
struct PosedVars {
  Var pos, scale, quat;
};

inline PosedVars bind_and_pose_vars(const Var& dpos, const Var& sigma, const Var& quat_local,
                                    const BoundFrames& fr) {
  GS_CHECK(dpos->val.rows() == fr.origins.rows(), "bind_and_pose: pixel count mismatch");
  Var scale_col = constant(fr.scales);
  Var origins = constant(fr.origins);
  PosedVars out;
  out.pos = add(origins, mul_broadcast_col(rowwise_rotate_const(fr.rot, dpos), scale_col));
  out.scale = mul_broadcast_col(sigma, scale_col);
  out.quat = quat_premul_const(fr.quat, quat_local);
  return out;
}

}  // namespace gsavatar
