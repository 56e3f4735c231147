#pragma once

// Shared helpers for the test suites: a finite-difference gradient checker,
// a brute-force per-pixel render oracle (no tiles, no sort machinery), a
// sequential strand-geometry oracle and small filesystem utilities. The
// oracles intentionally re-derive results with straightforward loops so the
// library implementations are checked against independent arithmetic.

#include <filesystem>
#include <functional>
#include <random>

#include "gsavatar/render/raster.hpp"

namespace gsavatar::testutil {

// ---------------------------------------------------------------------------
// finite differences

struct FdReport {
  real max_err = 0;      // worst |analytic - fd| / max(1, |analytic|, |fd|)
  std::string where;     // "param#k[i]" of the worst component
  long checked = 0;
};

// Central-difference check of d(loss)/d(param) for every component of every
// listed parameter. `build` must rebuild the scalar loss graph from the
// current parameter values on each call.
inline FdReport fd_check(const std::vector<Var>& params, const std::function<Var()>& build,
                         real h = 1e-5) {
  Var loss = build();
  GS_CHECK(loss->val.numel() == 1, "fd_check: loss must be scalar");
  for (const auto& p : params) {
    p->grad_ready = false;
    p->grad = Tensor();
  }
  backward(loss);

  FdReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Var p = params[pi];
    Tensor analytic = p->grad_ready ? p->grad : Tensor(p->val.shape);
    for (long i = 0; i < p->val.numel(); ++i) {
      real x0 = p->val.v[size_t(i)];
      real step = h * std::max(real(1), std::abs(x0));
      p->val.v[size_t(i)] = x0 + step;
      real fp = build()->val(0, 0);
      p->val.v[size_t(i)] = x0 - step;
      real fm = build()->val(0, 0);
      p->val.v[size_t(i)] = x0;
      real fd = (fp - fm) / (2 * step);
      real ga = analytic.v[size_t(i)];
      real err = std::abs(ga - fd) / std::max({real(1), std::abs(ga), std::abs(fd)});
      ++rep.checked;
      if (err > rep.max_err) {
        rep.max_err = err;
        rep.where = "param#" + std::to_string(pi) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// brute-force render oracle

// Per-pixel direct evaluation of the same projection and compositing math,
// without tiles, bounding boxes or early culling structures. Gaussians are
// visited in global (depth, index) order at every pixel.
inline Tensor oracle_render(const Tensor& pos, const Tensor& scale, const Tensor& quat,
                            const Tensor& opacity, const Tensor& color, const RasterParams& prm) {
  const Camera& cam = prm.cam;
  long M = pos.rows();
  struct Proj {
    bool valid;
    Vec2 mean;
    Vec3 conic;
    real depth;
    long idx;
  };
  std::vector<Proj> projs;
  for (long i = 0; i < M; ++i) {
    Vec3 p(pos(i, 0), pos(i, 1), pos(i, 2));
    Vec3 t = cam.R * p + cam.t;
    if (t.z() < prm.znear) continue;
    Vec4 q(quat(i, 0), quat(i, 1), quat(i, 2), quat(i, 3));
    real qn = q.norm();
    if (qn < 1e-12) continue;
    q /= qn;
    real w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    Mat3 S = Vec3(scale(i, 0) * scale(i, 0), scale(i, 1) * scale(i, 1),
                  scale(i, 2) * scale(i, 2))
                 .asDiagonal();
    Mat3 cov_cam = cam.R * (R * S * R.transpose()) * cam.R.transpose();
    Eigen::Matrix<real, 2, 3> J;
    J << cam.fx / t.z(), 0, -cam.fx * t.x() / (t.z() * t.z()), 0, cam.fy / t.z(),
        -cam.fy * t.y() / (t.z() * t.z());
    Mat2 cov2d = J * cov_cam * J.transpose() + Mat2::Identity() * prm.cov_floor;
    real det = cov2d.determinant();
    if (det <= 0) continue;
    Proj pr;
    pr.valid = true;
    pr.mean = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
    pr.conic = Vec3(cov2d(1, 1) / det, -cov2d(0, 1) / det, cov2d(0, 0) / det);
    pr.depth = t.z();
    pr.idx = i;
    projs.push_back(pr);
  }
  std::stable_sort(projs.begin(), projs.end(), [](const Proj& a, const Proj& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.idx < b.idx;
  });

  Tensor out(cam.H * cam.W, 6);
  for (long py = 0; py < cam.H; ++py)
    for (long px = 0; px < cam.W; ++px) {
      real pxc = real(px) + 0.5, pyc = real(py) + 0.5;
      real T = 1.0, r = 0, g = 0, b = 0, s0 = 0, s1 = 0;
      for (const Proj& pr : projs) {
        if (T < prm.T_stop) break;
        real dx = pxc - pr.mean.x(), dy = pyc - pr.mean.y();
        real power = 0.5 * (pr.conic[0] * dx * dx + pr.conic[2] * dy * dy) + pr.conic[1] * dx * dy;
        if (power > prm.cutoff || power < 0) continue;
        real alpha = std::min(prm.alpha_max, opacity(pr.idx, 0) * std::exp(-power));
        if (alpha < prm.alpha_skip) continue;
        real a = alpha * T;
        r += a * color(pr.idx, 0);
        g += a * color(pr.idx, 1);
        b += a * color(pr.idx, 2);
        if (!prm.semantic.empty()) {
          if (prm.semantic[size_t(pr.idx)] == 0)
            s0 += a;
          else
            s1 += a;
        }
        T *= 1.0 - alpha;
      }
      long p = py * cam.W + px;
      out(p, 0) = r + prm.bg.x() * T;
      out(p, 1) = g + prm.bg.y() * T;
      out(p, 2) = b + prm.bg.z() * T;
      out(p, 3) = 1.0 - T;
      out(p, 4) = s0;
      out(p, 5) = s1;
    }
  return out;
}

// ---------------------------------------------------------------------------
// strand oracle: sequential accumulation of segment chains

struct StrandOracle {
  Tensor points;     // (S+1, 3) polyline vertices including the root
  Tensor midpoints;  // (S, 3)
  Tensor lengths;    // (S, 1)
  real total_len = 0;
};

inline StrandOracle strand_oracle(const Vec3& root, const Tensor& dirs) {
  long S = dirs.rows();
  StrandOracle o;
  o.points = Tensor(S + 1, 3);
  o.midpoints = Tensor(S, 3);
  o.lengths = Tensor(S, 1);
  Vec3 cur = root;
  for (long c = 0; c < 3; ++c) o.points(0, c) = root[c];
  for (long s = 0; s < S; ++s) {
    Vec3 d(dirs(s, 0), dirs(s, 1), dirs(s, 2));
    Vec3 nxt = cur + d;
    for (long c = 0; c < 3; ++c) {
      o.points(s + 1, c) = nxt[c];
      o.midpoints(s, c) = 0.5 * (cur[c] + nxt[c]);
    }
    o.lengths(s, 0) = d.norm();
    o.total_len += d.norm();
    cur = nxt;
  }
  return o;
}

// ---------------------------------------------------------------------------
// misc

inline real max_abs_diff(const Tensor& a, const Tensor& b) {
  GS_CHECK(a.numel() == b.numel(), "max_abs_diff: size mismatch");
  real m = 0;
  for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

inline Tensor random_tensor(long r, long c, unsigned seed, real lo = -1.0, real hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<real> dist(lo, hi);
  Tensor t(r, c);
  for (auto& x : t.v) x = dist(gen);
  return t;
}

inline std::string make_temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  std::string base = fs::temp_directory_path().string() + "/gsavatar_" + tag + "_XXXXXX";
  std::vector<char> buf(base.begin(), base.end());
  buf.push_back('\0');
  GS_CHECK(mkdtemp(buf.data()) != nullptr, "mkdtemp failed");
  return std::string(buf.data());
}

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  GS_CHECK(f.good(), "cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

// Intersection-over-union of two binary masks derived by thresholding.
inline real mask_iou(const std::vector<real>& a, const std::vector<real>& b, real thresh = 0.5) {
  GS_CHECK(a.size() == b.size(), "mask_iou: size mismatch");
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    bool x = a[i] > thresh, y = b[i] > thresh;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : real(inter) / real(uni);
}

}  // namespace gsavatar::testutil
