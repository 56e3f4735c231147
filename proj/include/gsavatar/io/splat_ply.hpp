#pragma once

#include <fstream>

#include "gsavatar/geometry/gaussians.hpp"

namespace gsavatar {

// Binary little-endian splat PLY, compatible with common 3DGS viewers:
// float32 x,y,z, nx,ny,nz (zeros), f_dc_0..2 (SH DC coefficients), opacity
// (pre-sigmoid logit), scale_0..2 (log), rot_0..3 (wxyz), plus a uchar
// semantic label (0 face, 1 hair).

namespace detail {
constexpr real kShC0 = 0.28209479177387814;  // Y_0^0

inline void put_f32(std::ofstream& f, real v) {
  float x = float(v);
  f.write(reinterpret_cast<const char*>(&x), 4);
}

inline real get_f32(std::ifstream& f) {
  float x = 0;
  f.read(reinterpret_cast<char*>(&x), 4);
  return real(x);
}
}  // namespace detail

inline void export_splat_ply(const GaussianSet& g, const std::string& path) {
  long M = g.count();
  GS_CHECK(long(g.semantic.size()) == M, "splat export: unlabeled Gaussians");
  std::ofstream f(path, std::ios::binary);
  GS_CHECK(f.good(), "splat export: cannot write " + path);
  f << "ply\nformat binary_little_endian 1.0\nelement vertex " << M << "\n";
  for (const char* p : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                        "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"})
    f << "property float " << p << "\n";
  f << "property uchar semantic\nend_header\n";
  for (long i = 0; i < M; ++i) {
    for (long c = 0; c < 3; ++c) detail::put_f32(f, g.pos(i, c));
    for (long c = 0; c < 3; ++c) detail::put_f32(f, 0.0);
    for (long c = 0; c < 3; ++c) detail::put_f32(f, (g.color(i, c) - 0.5) / detail::kShC0);
    real a = std::clamp(g.opacity(i, 0), real(1e-6), real(1.0 - 1e-6));
    detail::put_f32(f, std::log(a / (1.0 - a)));
    for (long c = 0; c < 3; ++c) detail::put_f32(f, std::log(g.scale(i, c)));
    for (long c = 0; c < 4; ++c) detail::put_f32(f, g.quat(i, c));
    char sem = char(g.semantic[size_t(i)]);
    f.write(&sem, 1);
  }
  GS_CHECK(f.good(), "splat export: write failed for " + path);
}

inline GaussianSet import_splat_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  GS_CHECK(f.good(), "splat import: cannot open " + path);
  std::string line;
  long M = -1;
  bool header_done = false;
  std::getline(f, line);
  GS_CHECK(line == "ply", "splat import: not a PLY file");
  while (std::getline(f, line)) {
    if (line.rfind("element vertex ", 0) == 0) M = std::stol(line.substr(15));
    if (line == "end_header") {
      header_done = true;
      break;
    }
  }
  GS_CHECK(header_done && M >= 0, "splat import: malformed header");
  GaussianSet g;
  g.pos = Tensor(M, 3);
  g.scale = Tensor(M, 3);
  g.quat = Tensor(M, 4);
  g.opacity = Tensor(M, 1);
  g.color = Tensor(M, 3);
  g.semantic.resize(size_t(M));
  for (long i = 0; i < M; ++i) {
    for (long c = 0; c < 3; ++c) g.pos(i, c) = detail::get_f32(f);
    for (long c = 0; c < 3; ++c) detail::get_f32(f);  // normals, ignored
    for (long c = 0; c < 3; ++c) g.color(i, c) = detail::get_f32(f) * detail::kShC0 + 0.5;
    real logit = detail::get_f32(f);
    g.opacity(i, 0) = 1.0 / (1.0 + std::exp(-logit));
    for (long c = 0; c < 3; ++c) g.scale(i, c) = std::exp(detail::get_f32(f));
    for (long c = 0; c < 4; ++c) g.quat(i, c) = detail::get_f32(f);
    char sem = 0;
    f.read(&sem, 1);
    g.semantic[size_t(i)] = uint8_t(sem);
  }
  GS_CHECK(f.good(), "splat import: truncated file " + path);
  return g;
}

}  // namespace gsavatar
