#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gsavatar {

using real = double;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatX>;
using CMatMap = Eigen::Map<const MatX>;

struct error : std::runtime_error {
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

#define GS_CHECK(cond, msg)                                      \
  do {                                                           \
    if (!(cond)) throw ::gsavatar::error(std::string("check failed: ") + (msg)); \
  } while (0)

constexpr real kPi = 3.14159265358979323846;

}  // namespace gsavatar
