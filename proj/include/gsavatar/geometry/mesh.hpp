#pragma once

#include <array>
#include <map>
#include <set>

#include "gsavatar/core/archive.hpp"
#include "gsavatar/core/rng.hpp"
#include "gsavatar/core/tensor.hpp"

namespace gsavatar {

// Head template: closed triangle mesh with a full-head UV chart, a scalp
// sub-chart for strand anchoring, and linear expression blendshapes.
struct TemplateMesh {
  Tensor verts;  // (V,3) canonical positions
  std::vector<std::array<long, 3>> faces;
  std::vector<std::array<Vec2, 3>> face_uv_head;   // per-corner, all faces
  std::vector<std::array<Vec2, 3>> face_uv_scalp;  // valid only where scalp[f]
  std::vector<uint8_t> scalp;                      // per-face region flag
  Tensor blend_basis;                              // (V*3, E)

  long vert_count() const { return verts.rows(); }
  long face_count() const { return long(faces.size()); }
  long blend_count() const { return blend_basis.cols(); }

  real mean_edge_length() const {
    std::set<std::pair<long, long>> edges;
    real sum = 0;
    for (const auto& f : faces)
      for (int k = 0; k < 3; ++k) {
        long a = f[size_t(k)], b = f[size_t((k + 1) % 3)];
        auto e = std::minmax(a, b);
        if (edges.insert({e.first, e.second}).second) {
          Vec3 pa(verts(a, 0), verts(a, 1), verts(a, 2));
          Vec3 pb(verts(b, 0), verts(b, 1), verts(b, 2));
          sum += (pa - pb).norm();
        }
      }
    return sum / real(edges.size());
  }
};

// verts = canonical + shape + basis * psi. `shape` may be empty.
inline Tensor apply_expression(const TemplateMesh& mesh, const Tensor& shape_offsets,
                               const std::vector<real>& psi) {
  GS_CHECK(long(psi.size()) == mesh.blend_count(), "apply_expression: psi size");
  Tensor out = mesh.verts;
  if (shape_offsets.numel() > 0) {
    GS_CHECK(shape_offsets.numel() == out.numel(), "apply_expression: shape offsets size");
    for (long i = 0; i < out.numel(); ++i) out.v[size_t(i)] += shape_offsets.v[size_t(i)];
  }
  const Tensor& B = mesh.blend_basis;
  for (long i = 0; i < out.numel(); ++i) {
    real d = 0;
    for (long e = 0; e < B.cols(); ++e) d += B(i, e) * psi[size_t(e)];
    out.v[size_t(i)] += d;
  }
  return out;
}

// Throws with a description of the first violated invariant.
inline void validate_template(const TemplateMesh& mesh) {
  GS_CHECK(mesh.verts.cols() == 3, "template: verts must be (V,3)");
  GS_CHECK(long(mesh.face_uv_head.size()) == mesh.face_count(), "template: head uv per face");
  GS_CHECK(long(mesh.scalp.size()) == mesh.face_count(), "template: scalp flag per face");
  GS_CHECK(mesh.blend_basis.rows() == mesh.vert_count() * 3, "template: blend basis rows");
  // closed 2-manifold: every undirected edge is shared by exactly two faces,
  // once per orientation
  std::map<std::pair<long, long>, int> directed;
  for (const auto& f : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      long a = f[size_t(k)], b = f[size_t((k + 1) % 3)];
      GS_CHECK(a != b && a >= 0 && b >= 0 && a < mesh.vert_count() && b < mesh.vert_count(),
               "template: bad face index");
      GS_CHECK((++directed[{a, b}] == 1), "template: duplicated directed edge");
    }
  for (const auto& [e, n] : directed) {
    auto it = directed.find({e.second, e.first});
    GS_CHECK(it != directed.end(), "template: boundary edge found, mesh not closed");
  }
  // scalp region is edge-connected
  std::vector<long> scalp_faces;
  for (long f = 0; f < mesh.face_count(); ++f)
    if (mesh.scalp[size_t(f)]) scalp_faces.push_back(f);
  GS_CHECK(!scalp_faces.empty(), "template: empty scalp region");
  std::map<std::pair<long, long>, std::vector<long>> edge_faces;
  for (long f = 0; f < mesh.face_count(); ++f) {
    if (!mesh.scalp[size_t(f)]) continue;
    const auto& tri = mesh.faces[size_t(f)];
    for (int k = 0; k < 3; ++k) {
      auto e = std::minmax(tri[size_t(k)], tri[size_t((k + 1) % 3)]);
      edge_faces[{e.first, e.second}].push_back(f);
    }
  }
  std::set<long> visited;
  std::vector<long> stack = {scalp_faces[0]};
  std::map<long, std::vector<long>> nbrs;
  for (const auto& [e, fs] : edge_faces)
    if (fs.size() == 2) {
      nbrs[fs[0]].push_back(fs[1]);
      nbrs[fs[1]].push_back(fs[0]);
    }
  while (!stack.empty()) {
    long f = stack.back();
    stack.pop_back();
    if (!visited.insert(f).second) continue;
    for (long nb : nbrs[f]) stack.push_back(nb);
  }
  GS_CHECK(visited.size() == scalp_faces.size(), "template: scalp region not contiguous");
  // UV inside the unit square
  auto check_uv = [](const std::array<Vec2, 3>& uv) {
    for (const auto& p : uv)
      GS_CHECK(p.x() >= 0 && p.x() <= 1 && p.y() >= 0 && p.y() <= 1, "template: uv out of range");
  };
  for (long f = 0; f < mesh.face_count(); ++f) {
    check_uv(mesh.face_uv_head[size_t(f)]);
    if (mesh.scalp[size_t(f)]) check_uv(mesh.face_uv_scalp[size_t(f)]);
  }
}

// ---------------------------------------------------------------------------
// Built-in head stand-in: an ellipsoid lat-long sphere with a nose bump,
// full-head rectangle chart on the left half of the atlas and a polar scalp
// disk chart on the right half.

namespace detail {
inline long grid_vid(long i, long j, long n_lat, long n_lon) {
  // i in [0, n_lat], poles collapse to single vertices
  if (i == 0) return 0;
  if (i == n_lat) return 1 + (n_lat - 1) * n_lon;
  return 1 + (i - 1) * n_lon + (j % n_lon + n_lon) % n_lon;
}
}  // namespace detail

inline TemplateMesh build_head_template(long n_lat, long n_lon, long blend_count, uint64_t seed) {
  GS_CHECK(n_lat >= 8 && n_lon >= 8, "template: grid too small");
  TemplateMesh mesh;
  const Vec3 radii(0.72, 1.0, 0.82);
  long V = 2 + (n_lat - 1) * n_lon;
  mesh.verts = Tensor(V, 3);

  auto dir_of = [&](real theta, real phi) {
    return Vec3(std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi));
  };
  auto pos_of = [&](real theta, real phi) -> Vec3 {
    Vec3 d = dir_of(theta, phi);
    Vec3 p(radii.x() * d.x(), radii.y() * d.y(), radii.z() * d.z());
    // nose bump on the front just below the equator
    real dth = theta - 1.65, dph = std::atan2(std::sin(phi), std::cos(phi));
    real g = std::exp(-(dth * dth + std::pow(std::sin(theta) * dph, 2)) / (2 * 0.28 * 0.28));
    return p + d * 0.16 * g;
  };

  auto set_vert = [&](long vid, const Vec3& p) {
    mesh.verts(vid, 0) = p.x();
    mesh.verts(vid, 1) = p.y();
    mesh.verts(vid, 2) = p.z();
  };
  set_vert(0, pos_of(0, 0));
  set_vert(1 + (n_lat - 1) * n_lon, pos_of(kPi, 0));
  for (long i = 1; i < n_lat; ++i)
    for (long j = 0; j < n_lon; ++j) {
      real theta = kPi * real(i) / real(n_lat);
      real phi = 2 * kPi * real(j) / real(n_lon);
      set_vert(detail::grid_vid(i, j, n_lat, n_lon), pos_of(theta, phi));
    }

  // faces with (i,j) grid coordinates per corner so UVs can be assigned
  // without seam ambiguity
  struct CornerIj {
    real i, j;
  };
  std::vector<std::array<CornerIj, 3>> corner_ij;
  auto add_face = [&](std::array<long, 3> vids, std::array<CornerIj, 3> ij) {
    mesh.faces.push_back(vids);
    corner_ij.push_back(ij);
  };
  for (long j = 0; j < n_lon; ++j) {
    real jc = real(j) + 0.5;
    add_face({0, detail::grid_vid(1, j, n_lat, n_lon), detail::grid_vid(1, j + 1, n_lat, n_lon)},
             {CornerIj{0, jc}, CornerIj{1, real(j)}, CornerIj{1, real(j + 1)}});
  }
  for (long i = 1; i < n_lat - 1; ++i)
    for (long j = 0; j < n_lon; ++j) {
      long a = detail::grid_vid(i, j, n_lat, n_lon), b = detail::grid_vid(i + 1, j, n_lat, n_lon);
      long c = detail::grid_vid(i + 1, j + 1, n_lat, n_lon),
           d = detail::grid_vid(i, j + 1, n_lat, n_lon);
      add_face({a, b, c}, {CornerIj{real(i), real(j)}, CornerIj{real(i + 1), real(j)},
                           CornerIj{real(i + 1), real(j + 1)}});
      add_face({a, c, d}, {CornerIj{real(i), real(j)}, CornerIj{real(i + 1), real(j + 1)},
                           CornerIj{real(i), real(j + 1)}});
    }
  for (long j = 0; j < n_lon; ++j) {
    real jc = real(j) + 0.5;
    add_face({1 + (n_lat - 1) * n_lon, detail::grid_vid(n_lat - 1, j + 1, n_lat, n_lon),
              detail::grid_vid(n_lat - 1, j, n_lat, n_lon)},
             {CornerIj{real(n_lat), jc}, CornerIj{real(n_lat - 1), real(j + 1)},
              CornerIj{real(n_lat - 1), real(j)}});
  }

  // outward orientation
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    auto& tri = mesh.faces[f];
    Vec3 a(mesh.verts(tri[0], 0), mesh.verts(tri[0], 1), mesh.verts(tri[0], 2));
    Vec3 b(mesh.verts(tri[1], 0), mesh.verts(tri[1], 1), mesh.verts(tri[1], 2));
    Vec3 c(mesh.verts(tri[2], 0), mesh.verts(tri[2], 1), mesh.verts(tri[2], 2));
    if ((b - a).cross(c - a).dot((a + b + c) / 3.0) < 0) {
      std::swap(tri[1], tri[2]);
      std::swap(corner_ij[f][1], corner_ij[f][2]);
    }
  }

  // scalp selection: faces whose outward direction points up and slightly
  // back; keep the top scoring ~35%
  long F = mesh.face_count();
  std::vector<std::pair<real, long>> scored(static_cast<size_t>(F));
  for (long f = 0; f < F; ++f) {
    const auto& tri = mesh.faces[size_t(f)];
    Vec3 cen = Vec3::Zero();
    for (long k = 0; k < 3; ++k)
      cen += Vec3(mesh.verts(tri[size_t(k)], 0), mesh.verts(tri[size_t(k)], 1),
                  mesh.verts(tri[size_t(k)], 2));
    cen /= 3.0;
    Vec3 d = cen.normalized();
    scored[size_t(f)] = {d.y() - 0.3 * d.z(), f};
  }
  std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  mesh.scalp.assign(size_t(F), 0);
  long n_scalp = long(std::lround(0.35 * real(F)));
  for (long k = 0; k < n_scalp; ++k) mesh.scalp[size_t(scored[size_t(k)].second)] = 1;

  // head chart: equirectangular rectangle on the left half of the atlas.
  // Longitude seam handled by unwrapping each face to a contiguous j range.
  mesh.face_uv_head.resize(size_t(F));
  for (long f = 0; f < F; ++f) {
    std::array<CornerIj, 3> ij = corner_ij[size_t(f)];
    real jmax = std::max({ij[0].j, ij[1].j, ij[2].j});
    for (auto& c : ij)
      if (jmax - c.j > real(n_lon) / 2.0) c.j += real(n_lon);
    for (long k = 0; k < 3; ++k) {
      real u = 0.01 + 0.47 * ij[size_t(k)].j / real(n_lon);
      real v = 0.01 + 0.98 * ij[size_t(k)].i / real(n_lat);
      mesh.face_uv_head[size_t(f)][size_t(k)] = Vec2(u, v);
    }
  }

  // scalp chart: polar disk on the right half, radius from latitude and
  // angle from longitude; no seam because the angle enters through sin/cos
  real max_i = 0;
  for (long f = 0; f < F; ++f)
    if (mesh.scalp[size_t(f)])
      for (const auto& c : corner_ij[size_t(f)]) max_i = std::max(max_i, c.i);
  mesh.face_uv_scalp.resize(size_t(F));
  for (long f = 0; f < F; ++f) {
    if (!mesh.scalp[size_t(f)]) {
      mesh.face_uv_scalp[size_t(f)] = {Vec2(0, 0), Vec2(0, 0), Vec2(0, 0)};
      continue;
    }
    for (long k = 0; k < 3; ++k) {
      const CornerIj& c = corner_ij[size_t(f)][size_t(k)];
      real rr = 0.22 * c.i / (max_i + 0.5);
      real ang = 2 * kPi * c.j / real(n_lon);
      mesh.face_uv_scalp[size_t(f)][size_t(k)] =
          Vec2(0.75 + rr * std::sin(ang), 0.5 + rr * std::cos(ang));
    }
  }

  // expression basis: a jaw-open mode plus seeded smooth displacement lobes
  mesh.blend_basis = Tensor(V * 3, blend_count);
  Rng rng(seed, 7);
  for (long v = 0; v < V; ++v) {
    Vec3 p(mesh.verts(v, 0), mesh.verts(v, 1), mesh.verts(v, 2));
    Vec3 d = p.normalized();
    real jaw = 1.0 / (1.0 + std::exp(-6.0 * (-d.y() - 0.35))) * std::max(0.0, d.z());
    mesh.blend_basis(v * 3 + 1, 0) = -0.10 * jaw;
    mesh.blend_basis(v * 3 + 2, 0) = -0.04 * jaw;
  }
  for (long e = 1; e < blend_count; ++e) {
    for (int lobe = 0; lobe < 3; ++lobe) {
      Vec3 center(rng.normal(), rng.normal(), rng.normal());
      center.normalize();
      Vec3 dir(rng.normal(), rng.normal(), rng.normal());
      dir.normalize();
      real amp = 0.035 * rng.uniform(0.5, 1.0);
      real width = rng.uniform(0.35, 0.6);
      for (long v = 0; v < V; ++v) {
        Vec3 p(mesh.verts(v, 0), mesh.verts(v, 1), mesh.verts(v, 2));
        Vec3 d = p.normalized();
        real w = std::exp(-(d - center).squaredNorm() / (2 * width * width));
        for (long c = 0; c < 3; ++c) mesh.blend_basis(v * 3 + c, e) += amp * w * dir[c];
      }
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// archive IO; any asset exposing these arrays can be dropped in as template

inline void save_template(const TemplateMesh& mesh, const std::string& path) {
  Archive ar;
  ar.meta["kind"] = "head_template";
  ar.add_tensor("verts", mesh.verts);
  std::vector<int64_t> f;
  for (const auto& tri : mesh.faces) {
    f.push_back(tri[0]);
    f.push_back(tri[1]);
    f.push_back(tri[2]);
  }
  ar.add_i64("faces", f, {mesh.face_count(), 3});
  auto pack_uv = [](const std::vector<std::array<Vec2, 3>>& uv) {
    std::vector<real> out;
    for (const auto& a : uv)
      for (const auto& p : a) {
        out.push_back(p.x());
        out.push_back(p.y());
      }
    return out;
  };
  ar.add_f64("face_uv_head", pack_uv(mesh.face_uv_head), {mesh.face_count(), 6});
  ar.add_f64("face_uv_scalp", pack_uv(mesh.face_uv_scalp), {mesh.face_count(), 6});
  ar.add_u8("scalp", mesh.scalp, {mesh.face_count()});
  ar.add_tensor("blend_basis", mesh.blend_basis);
  ar.save(path);
}

inline TemplateMesh load_template(const std::string& path) {
  Archive ar = Archive::load(path);
  TemplateMesh mesh;
  mesh.verts = ar.get_tensor("verts");
  auto f = ar.get_i64("faces");
  GS_CHECK(f.size() % 3 == 0, "template: faces array size");
  for (size_t i = 0; i < f.size(); i += 3)
    mesh.faces.push_back({long(f[i]), long(f[i + 1]), long(f[i + 2])});
  auto unpack_uv = [](const std::vector<real>& v) {
    std::vector<std::array<Vec2, 3>> out(v.size() / 6);
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = {Vec2(v[i * 6 + 0], v[i * 6 + 1]), Vec2(v[i * 6 + 2], v[i * 6 + 3]),
                Vec2(v[i * 6 + 4], v[i * 6 + 5])};
    return out;
  };
  mesh.face_uv_head = unpack_uv(ar.get_f64("face_uv_head"));
  mesh.face_uv_scalp = unpack_uv(ar.get_f64("face_uv_scalp"));
  mesh.scalp = ar.get_u8("scalp");
  mesh.blend_basis = ar.get_tensor("blend_basis");
  validate_template(mesh);
  return mesh;
}

}  // namespace gsavatar
