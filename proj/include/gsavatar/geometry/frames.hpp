#pragma once

#include "gsavatar/geometry/mesh.hpp"

namespace gsavatar {

// Local frame of a (possibly deformed) triangle: origin at the centroid,
// rotation columns (unit edge a->b, normal x edge, normal), isotropic scale
// from the triangle area.
struct TriangleFrame {
  Vec3 origin;
  Mat3 rot;
  real scale = 1;
  Vec4 quat;  // wxyz, same rotation as `rot`
};

inline Vec4 quat_from_mat(const Mat3& m) {
  Eigen::Quaterniond q(m);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1;
  return Vec4(q.w(), q.x(), q.y(), q.z());
}

inline Mat3 mat_from_quat(const Vec4& q) {
  Eigen::Quaterniond qq(q[0], q[1], q[2], q[3]);
  qq.normalize();
  return qq.toRotationMatrix();
}

inline TriangleFrame triangle_frame(const Vec3& a, const Vec3& b, const Vec3& c) {
  TriangleFrame fr;
  fr.origin = (a + b + c) / 3.0;
  Vec3 e = b - a;
  Vec3 cr = e.cross(c - a);
  real cn = cr.norm();
  GS_CHECK(cn > 1e-12 && e.norm() > 1e-12, "triangle_frame: degenerate triangle");
  Vec3 e1 = e.normalized();
  Vec3 n = cr / cn;
  fr.rot.col(0) = e1;
  fr.rot.col(1) = n.cross(e1);
  fr.rot.col(2) = n;
  fr.scale = std::sqrt(cn);  // sqrt(2 * area)
  fr.quat = quat_from_mat(fr.rot);
  return fr;
}

inline std::vector<TriangleFrame> triangle_frames(const Tensor& verts,
                                                  const std::vector<std::array<long, 3>>& faces) {
  std::vector<TriangleFrame> out;
  out.reserve(faces.size());
  for (const auto& f : faces) {
    Vec3 a(verts(f[0], 0), verts(f[0], 1), verts(f[0], 2));
    Vec3 b(verts(f[1], 0), verts(f[1], 1), verts(f[1], 2));
    Vec3 c(verts(f[2], 0), verts(f[2], 1), verts(f[2], 2));
    out.push_back(triangle_frame(a, b, c));
  }
  return out;
}

inline Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

}  // namespace gsavatar
