#pragma once

#include "gsavatar/geometry/mesh.hpp"

namespace gsavatar {

enum class Region : int { Head = 0, Scalp = 1 };

// Rasterization of a UV chart onto a pixel grid: each valid pixel remembers
// the triangle it falls in and its barycentric coordinates, which anchors one
// Gaussian (head) or one strand root (scalp) per pixel.
struct BindingTable {
  Region region = Region::Head;
  long H = 0, W = 0;
  Vec2 bbox_min, bbox_max;
  std::vector<long> face;    // per pixel, -1 where no triangle covers it
  std::vector<Vec3> bary;
  std::vector<long> valid;   // row-major indices of covered pixels

  long pixel_count() const { return H * W; }
  long valid_count() const { return long(valid.size()); }

  // anchor positions for all valid pixels on the given vertex set, (M,3)
  Tensor anchors(const Tensor& verts, const std::vector<std::array<long, 3>>& faces) const {
    Tensor out(valid_count(), 3);
    for (long m = 0; m < valid_count(); ++m) {
      long px = valid[size_t(m)];
      const auto& tri = faces[size_t(face[size_t(px)])];
      const Vec3& b = bary[size_t(px)];
      for (long c = 0; c < 3; ++c)
        out(m, c) = b[0] * verts(tri[0], c) + b[1] * verts(tri[1], c) + b[2] * verts(tri[2], c);
    }
    return out;
  }
};

namespace detail {
inline bool bary_of(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c, Vec3& out) {
  Vec2 v0 = b - a, v1 = c - a, v2 = p - a;
  real den = v0.x() * v1.y() - v1.x() * v0.y();
  if (std::abs(den) < 1e-14) return false;
  real w1 = (v2.x() * v1.y() - v1.x() * v2.y()) / den;
  real w2 = (v0.x() * v2.y() - v2.x() * v0.y()) / den;
  real w0 = 1.0 - w1 - w2;
  const real eps = -1e-10;
  if (w0 < eps || w1 < eps || w2 < eps) return false;
  out = Vec3(w0, w1, w2);
  return true;
}
}  // namespace detail

// Builds the per-pixel binding for one chart. The pixel grid spans the
// chart's bounding box; `strict_overlap_check` rejects charts where a pixel
// center lies strictly inside two triangles.
inline BindingTable uv_position_map(const TemplateMesh& mesh, Region region, long H, long W,
                                    bool strict_overlap_check = false) {
  BindingTable bt;
  bt.region = region;
  bt.H = H;
  bt.W = W;
  const bool scalp_only = region == Region::Scalp;
  const auto& uvs = scalp_only ? mesh.face_uv_scalp : mesh.face_uv_head;

  Vec2 lo(1e30, 1e30), hi(-1e30, -1e30);
  for (long f = 0; f < mesh.face_count(); ++f) {
    if (scalp_only && !mesh.scalp[size_t(f)]) continue;
    for (const auto& p : uvs[size_t(f)]) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  GS_CHECK(lo.x() < hi.x() && lo.y() < hi.y(), "uv_position_map: empty chart");
  Vec2 pad = (hi - lo) * 1e-6;
  bt.bbox_min = lo - pad;
  bt.bbox_max = hi + pad;

  bt.face.assign(size_t(H * W), -1);
  bt.bary.assign(size_t(H * W), Vec3::Zero());
  Vec2 span = bt.bbox_max - bt.bbox_min;
  auto pixel_uv = [&](long px, long py) {
    return Vec2(bt.bbox_min.x() + span.x() * (real(px) + 0.5) / real(W),
                bt.bbox_min.y() + span.y() * (real(py) + 0.5) / real(H));
  };

  for (long f = 0; f < mesh.face_count(); ++f) {
    if (scalp_only && !mesh.scalp[size_t(f)]) continue;
    const auto& uv = uvs[size_t(f)];
    real ulo = std::min({uv[0].x(), uv[1].x(), uv[2].x()});
    real uhi = std::max({uv[0].x(), uv[1].x(), uv[2].x()});
    real vlo = std::min({uv[0].y(), uv[1].y(), uv[2].y()});
    real vhi = std::max({uv[0].y(), uv[1].y(), uv[2].y()});
    long px0 = std::max(0L, long(std::floor((ulo - bt.bbox_min.x()) / span.x() * real(W) - 1)));
    long px1 = std::min(W - 1, long(std::ceil((uhi - bt.bbox_min.x()) / span.x() * real(W) + 1)));
    long py0 = std::max(0L, long(std::floor((vlo - bt.bbox_min.y()) / span.y() * real(H) - 1)));
    long py1 = std::min(H - 1, long(std::ceil((vhi - bt.bbox_min.y()) / span.y() * real(H) + 1)));
    for (long py = py0; py <= py1; ++py)
      for (long px = px0; px <= px1; ++px) {
        Vec3 b;
        if (!detail::bary_of(pixel_uv(px, py), uv[0], uv[1], uv[2], b)) continue;
        long idx = py * W + px;
        if (bt.face[size_t(idx)] >= 0) {
          if (strict_overlap_check) {
            const Vec3& prev = bt.bary[size_t(idx)];
            bool interior_now = b.minCoeff() > 1e-7;
            bool interior_prev = prev.minCoeff() > 1e-7;
            GS_CHECK(!(interior_now && interior_prev),
                     "uv_position_map: overlapping triangles in chart");
          }
          continue;  // boundary tie; first face wins
        }
        bt.face[size_t(idx)] = f;
        bt.bary[size_t(idx)] = b;
      }
  }
  for (long i = 0; i < H * W; ++i)
    if (bt.face[size_t(i)] >= 0) bt.valid.push_back(i);
  GS_CHECK(!bt.valid.empty(), "uv_position_map: no covered pixels");
  return bt;
}

}  // namespace gsavatar
