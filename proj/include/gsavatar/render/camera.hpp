#pragma once

#include "gsavatar/core/common.hpp"

namespace gsavatar {

// Pinhole camera, x_cam = R * x_world + t. Camera basis: x right, y down,
// z forward, so pixel rows grow downward like the image layout.
struct Camera {
  long W = 0, H = 0;
  real fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 to_cam(const Vec3& p) const { return R * p + t; }
  Vec3 eye() const { return -R.transpose() * t; }
  Vec3 forward_world() const { return R.row(2).transpose(); }

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, real fov_y, long W,
                        long H) {
    Camera c;
    c.W = W;
    c.H = H;
    Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up).normalized();
    Vec3 y = z.cross(x).normalized();  // points opposite `up`: image-down
    c.R.row(0) = x;
    c.R.row(1) = y;
    c.R.row(2) = z;
    c.t = -c.R * eye;
    c.fy = real(H) / (2.0 * std::tan(fov_y / 2.0));
    c.fx = c.fy;
    c.cx = real(W) / 2.0;
    c.cy = real(H) / 2.0;
    return c;
  }
};

}  // namespace gsavatar
