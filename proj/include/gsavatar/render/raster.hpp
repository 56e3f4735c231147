#pragma once

#include <thread>

#include "gsavatar/core/graph.hpp"
#include "gsavatar/render/camera.hpp"

namespace gsavatar {

// Tile-based alpha-compositing rasterizer for anisotropic 3D Gaussians.
//
// Forward: EWA projection (cov2d = J W Sigma W^T J^T + floor), global
// front-to-back depth sort (ties broken by index), 16x16 tiles, per-pixel
// compositing with transmittance early-out. Output rows are pixels with
// channels [r, g, b, alpha, sem_face, sem_hair].
//
// Backward: analytic. Per pixel the compositing chain is replayed
// back-to-front, reconstructing each transmittance from the stored final
// value, then gradients flow through conic -> cov2d -> (J, Sigma_cam) ->
// (position, quaternion, scale). With a fixed thread count results are
// bit-reproducible: tiles are statically partitioned and per-thread gradient
// buffers are reduced in thread order.

struct RasterParams {
  Camera cam;
  Vec3 bg = Vec3::Zero();
  std::vector<uint8_t> semantic;  // per-gaussian label, 0 = face, 1 = hair
  int threads = 1;
  real alpha_max = 0.999;   // per-sample opacity clamp
  real T_stop = 1e-4;       // terminate compositing below this transmittance
  real cutoff = 4.5;        // 0.5 * (3 sigma)^2 support cutoff in exponent units
  real cov_floor = 0.3;     // isotropic floor added to cov2d (pixels^2)
  real znear = 0.05;
  real alpha_skip = 1e-6;   // ignore numerically invisible samples
  static constexpr long kTile = 16;
};

struct GaussianProj {
  bool valid = false;
  Vec3 t_cam;
  Vec2 mean2d;
  Vec3 conic;  // (a, b, c) of the inverse 2x2 covariance
  Mat2 cov2d;
  real depth = 0;
  real radius = 0;
};

inline Mat3 rot_from_unit_quat(real w, real x, real y, real z) {
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

inline GaussianProj project_gaussian(const Vec3& pos, const Vec3& scale, const Vec4& quat,
                                     const RasterParams& prm) {
  GaussianProj g;
  const Camera& cam = prm.cam;
  g.t_cam = cam.to_cam(pos);
  if (g.t_cam.z() < prm.znear) return g;
  real tx = g.t_cam.x(), ty = g.t_cam.y(), tz = g.t_cam.z();
  g.mean2d = Vec2(cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy);
  real qn = quat.norm();
  if (qn < 1e-12) return g;
  Mat3 Rq = rot_from_unit_quat(quat[0] / qn, quat[1] / qn, quat[2] / qn, quat[3] / qn);
  Mat3 Sw = Rq * scale.cwiseProduct(scale).asDiagonal() * Rq.transpose();
  Mat3 Sc = cam.R * Sw * cam.R.transpose();
  Eigen::Matrix<real, 2, 3> J;
  J << cam.fx / tz, 0, -cam.fx * tx / (tz * tz), 0, cam.fy / tz, -cam.fy * ty / (tz * tz);
  g.cov2d = J * Sc * J.transpose() + Mat2::Identity() * prm.cov_floor;
  real det = g.cov2d.determinant();
  if (det <= 0) return g;
  g.conic = Vec3(g.cov2d(1, 1) / det, -g.cov2d(0, 1) / det, g.cov2d(0, 0) / det);
  real mid = 0.5 * (g.cov2d(0, 0) + g.cov2d(1, 1));
  real lmax = mid + std::sqrt(std::max(real(0.01), mid * mid - det));
  g.radius = std::ceil(3.0 * std::sqrt(lmax));
  g.depth = tz;
  g.valid = true;
  return g;
}

namespace detail {

struct RasterContext {
  RasterParams prm;
  long M = 0;
  std::vector<GaussianProj> proj;
  std::vector<std::vector<int>> tiles;  // per tile, indices in sorted depth order
  std::vector<int> n_proc;              // per pixel, samples consumed before early-out
  long tiles_x = 0, tiles_y = 0;
};

inline void build_tiles(RasterContext& ctx) {
  const long W = ctx.prm.cam.W, H = ctx.prm.cam.H, T = RasterParams::kTile;
  ctx.tiles_x = (W + T - 1) / T;
  ctx.tiles_y = (H + T - 1) / T;
  ctx.tiles.assign(size_t(ctx.tiles_x * ctx.tiles_y), {});
  std::vector<int> order;
  order.reserve(size_t(ctx.M));
  for (int i = 0; i < ctx.M; ++i)
    if (ctx.proj[size_t(i)].valid) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    real da = ctx.proj[size_t(a)].depth, db = ctx.proj[size_t(b)].depth;
    return da != db ? da < db : a < b;
  });
  for (int i : order) {
    const GaussianProj& g = ctx.proj[size_t(i)];
    long x0 = std::clamp(long((g.mean2d.x() - g.radius) / real(T)), 0L, ctx.tiles_x - 1);
    long x1 = std::clamp(long((g.mean2d.x() + g.radius) / real(T)), 0L, ctx.tiles_x - 1);
    long y0 = std::clamp(long((g.mean2d.y() - g.radius) / real(T)), 0L, ctx.tiles_y - 1);
    long y1 = std::clamp(long((g.mean2d.y() + g.radius) / real(T)), 0L, ctx.tiles_y - 1);
    if (g.mean2d.x() + g.radius < 0 || g.mean2d.x() - g.radius > real(W) ||
        g.mean2d.y() + g.radius < 0 || g.mean2d.y() - g.radius > real(H))
      continue;
    for (long ty = y0; ty <= y1; ++ty)
      for (long tx = x0; tx <= x1; ++tx) ctx.tiles[size_t(ty * ctx.tiles_x + tx)].push_back(i);
  }
}

// forward compositing for the tiles assigned to one worker
inline void forward_tiles(RasterContext& ctx, const Tensor& opacity, const Tensor& color,
                          Tensor& out, int worker, int workers) {
  const long W = ctx.prm.cam.W, H = ctx.prm.cam.H, T = RasterParams::kTile;
  const Vec3& bg = ctx.prm.bg;
  for (long tile = worker; tile < long(ctx.tiles.size()); tile += workers) {
    const auto& list = ctx.tiles[size_t(tile)];
    long ty = tile / ctx.tiles_x, tx = tile % ctx.tiles_x;
    for (long py = ty * T; py < std::min(H, (ty + 1) * T); ++py)
      for (long px = tx * T; px < std::min(W, (tx + 1) * T); ++px) {
        real pxc = real(px) + 0.5, pyc = real(py) + 0.5;
        real Tcur = 1.0;
        real r = 0, g = 0, b = 0, s0 = 0, s1 = 0;
        int processed = 0;
        for (int idx : list) {
          if (Tcur < ctx.prm.T_stop) break;
          ++processed;
          const GaussianProj& gp = ctx.proj[size_t(idx)];
          real dx = pxc - gp.mean2d.x(), dy = pyc - gp.mean2d.y();
          real power =
              0.5 * (gp.conic[0] * dx * dx + gp.conic[2] * dy * dy) + gp.conic[1] * dx * dy;
          if (power > ctx.prm.cutoff || power < 0) continue;
          real alpha = std::min(ctx.prm.alpha_max, opacity(idx, 0) * std::exp(-power));
          if (alpha < ctx.prm.alpha_skip) continue;
          real a = alpha * Tcur;
          r += a * color(idx, 0);
          g += a * color(idx, 1);
          b += a * color(idx, 2);
          if (!ctx.prm.semantic.empty()) {
            if (ctx.prm.semantic[size_t(idx)] == 0)
              s0 += a;
            else
              s1 += a;
          }
          Tcur *= (1.0 - alpha);
        }
        long p = py * W + px;
        ctx.n_proc[size_t(p)] = processed;
        out(p, 0) = r + bg.x() * Tcur;
        out(p, 1) = g + bg.y() * Tcur;
        out(p, 2) = b + bg.z() * Tcur;
        out(p, 3) = 1.0 - Tcur;
        out(p, 4) = s0;
        out(p, 5) = s1;
      }
  }
}

struct GaussGrad {
  Tensor mean2d;  // (M,2)
  Tensor conic;   // (M,3)
  Tensor opacity; // (M,1)
  Tensor color;   // (M,3)

  explicit GaussGrad(long M) : mean2d(M, 2), conic(M, 3), opacity(M, 1), color(M, 3) {}

  void add(const GaussGrad& o) {
    for (long i = 0; i < mean2d.numel(); ++i) mean2d.v[size_t(i)] += o.mean2d.v[size_t(i)];
    for (long i = 0; i < conic.numel(); ++i) conic.v[size_t(i)] += o.conic.v[size_t(i)];
    for (long i = 0; i < opacity.numel(); ++i) opacity.v[size_t(i)] += o.opacity.v[size_t(i)];
    for (long i = 0; i < color.numel(); ++i) color.v[size_t(i)] += o.color.v[size_t(i)];
  }
};

// backward compositing: replay each pixel back-to-front, reconstructing the
// running transmittance from the stored final value
inline void backward_tiles(const RasterContext& ctx, const Tensor& opacity, const Tensor& color,
                           const Tensor& out_val, const Tensor& out_grad, GaussGrad& gg,
                           int worker, int workers) {
  const long W = ctx.prm.cam.W, H = ctx.prm.cam.H, T = RasterParams::kTile;
  const Vec3& bg = ctx.prm.bg;
  for (long tile = worker; tile < long(ctx.tiles.size()); tile += workers) {
    const auto& list = ctx.tiles[size_t(tile)];
    long ty = tile / ctx.tiles_x, tx = tile % ctx.tiles_x;
    for (long py = ty * T; py < std::min(H, (ty + 1) * T); ++py)
      for (long px = tx * T; px < std::min(W, (tx + 1) * T); ++px) {
        long p = py * W + px;
        int n = ctx.n_proc[size_t(p)];
        if (n == 0) continue;
        real pxc = real(px) + 0.5, pyc = real(py) + 0.5;
        real gr = out_grad(p, 0), gg_ = out_grad(p, 1), gb = out_grad(p, 2);
        real ga = out_grad(p, 3), gs0 = out_grad(p, 4), gs1 = out_grad(p, 5);
        // dL/dT_end: rgb gains bg * T_end, alpha loses T_end
        real end_coeff = gr * bg.x() + gg_ * bg.y() + gb * bg.z() - ga;
        real T_end = 1.0 - out_val(p, 3);
        real Tcur = T_end;        // transmittance after the current sample
        real suffix = 0;          // sum over later samples of w_j * a_j
        for (int k = n - 1; k >= 0; --k) {
          int idx = list[size_t(k)];
          const GaussianProj& gp = ctx.proj[size_t(idx)];
          real dx = pxc - gp.mean2d.x(), dy = pyc - gp.mean2d.y();
          real power =
              0.5 * (gp.conic[0] * dx * dx + gp.conic[2] * dy * dy) + gp.conic[1] * dx * dy;
          if (power > ctx.prm.cutoff || power < 0) continue;
          real G = std::exp(-power);
          real raw = opacity(idx, 0) * G;
          real alpha = std::min(ctx.prm.alpha_max, raw);
          if (alpha < ctx.prm.alpha_skip) continue;
          real T_before = Tcur / (1.0 - alpha);
          real a = alpha * T_before;
          real w = gr * color(idx, 0) + gg_ * color(idx, 1) + gb * color(idx, 2);
          if (!ctx.prm.semantic.empty())
            w += ctx.prm.semantic[size_t(idx)] == 0 ? gs0 : gs1;
          // color gradient
          gg.color(idx, 0) += a * gr;
          gg.color(idx, 1) += a * gg_;
          gg.color(idx, 2) += a * gb;
          // d a_j / d alpha_i = -a_j / (1 - alpha_i) for j > i, plus the
          // background term through T_end
          real dL_dalpha = w * T_before - (suffix + end_coeff * T_end) / (1.0 - alpha);
          if (raw < ctx.prm.alpha_max) {  // clamp is flat above
            real dL_dG = dL_dalpha * opacity(idx, 0);
            gg.opacity(idx, 0) += dL_dalpha * G;
            real dL_dpower = -G * dL_dG;
            // power = 0.5(A dx^2 + C dy^2) + B dx dy
            gg.conic(idx, 0) += dL_dpower * 0.5 * dx * dx;
            gg.conic(idx, 1) += dL_dpower * dx * dy;
            gg.conic(idx, 2) += dL_dpower * 0.5 * dy * dy;
            real dpow_ddx = gp.conic[0] * dx + gp.conic[1] * dy;
            real dpow_ddy = gp.conic[2] * dy + gp.conic[1] * dx;
            gg.mean2d(idx, 0) += -dL_dpower * dpow_ddx;
            gg.mean2d(idx, 1) += -dL_dpower * dpow_ddy;
          }
          suffix += w * a;
          Tcur = T_before;
        }
      }
  }
}

// per-gaussian chain from (mean2d, conic) gradients to the world inputs
inline void backward_projection(const RasterContext& ctx, const Tensor& pos, const Tensor& scale,
                                const Tensor& quat, const GaussGrad& gg, Tensor& gpos,
                                Tensor& gscale, Tensor& gquat) {
  const Camera& cam = ctx.prm.cam;
  for (long i = 0; i < ctx.M; ++i) {
    const GaussianProj& gp = ctx.proj[size_t(i)];
    if (!gp.valid) continue;
    real tx = gp.t_cam.x(), ty = gp.t_cam.y(), tz = gp.t_cam.z();
    Vec3 s(scale(i, 0), scale(i, 1), scale(i, 2));
    Vec4 q(quat(i, 0), quat(i, 1), quat(i, 2), quat(i, 3));
    real qn = q.norm();
    Vec4 qh = q / qn;
    Mat3 Rq = rot_from_unit_quat(qh[0], qh[1], qh[2], qh[3]);
    Mat3 Sw = Rq * s.cwiseProduct(s).asDiagonal() * Rq.transpose();
    Mat3 Sc = cam.R * Sw * cam.R.transpose();
    Eigen::Matrix<real, 2, 3> J;
    J << cam.fx / tz, 0, -cam.fx * tx / (tz * tz), 0, cam.fy / tz, -cam.fy * ty / (tz * tz);

    // conic = inverse(cov2d); dL/dcov = -conic * dL/dconic * conic with the
    // scalar (a,b,c) parameterization expanded to a full matrix
    Mat2 conic;
    conic << gp.conic[0], gp.conic[1], gp.conic[1], gp.conic[2];
    Mat2 Gconic;
    Gconic << gg.conic(i, 0), 0.5 * gg.conic(i, 1), 0.5 * gg.conic(i, 1), gg.conic(i, 2);
    Mat2 Gcov = -conic * Gconic * conic;

    // cov2d = J Sc J^T + floor
    Eigen::Matrix<real, 2, 3> GJ = (Gcov + Gcov.transpose()) * J * Sc;
    Mat3 GSc = J.transpose() * Gcov * J;
    Mat3 GSw = cam.R.transpose() * GSc * cam.R;

    // Sw = Rq diag(s^2) Rq^T
    Mat3 D = s.cwiseProduct(s).asDiagonal();
    Mat3 GRq = (GSw + GSw.transpose()) * Rq * D;
    Mat3 RtGR = Rq.transpose() * GSw * Rq;
    for (int k = 0; k < 3; ++k) gscale(i, k) += 2.0 * s[k] * RtGR(k, k);

    // rotation w.r.t. the normalized quaternion
    real w = qh[0], x = qh[1], y = qh[2], z = qh[3];
    Mat3 dRdw, dRdx, dRdy, dRdz;
    dRdw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
    dRdx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    dRdy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
    dRdz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
    Vec4 gqh(GRq.cwiseProduct(dRdw).sum(), GRq.cwiseProduct(dRdx).sum(),
             GRq.cwiseProduct(dRdy).sum(), GRq.cwiseProduct(dRdz).sum());
    Vec4 gq = (gqh - qh * qh.dot(gqh)) / qn;
    for (int k = 0; k < 4; ++k) gquat(i, k) += gq[k];

    // mean2d and J both depend on t_cam
    Vec2 gmean(gg.mean2d(i, 0), gg.mean2d(i, 1));
    Vec3 gt = J.transpose() * gmean;
    real fz2 = 1.0 / (tz * tz);
    gt.x() += GJ(0, 2) * (-cam.fx * fz2);
    gt.y() += GJ(1, 2) * (-cam.fy * fz2);
    gt.z() += GJ(0, 0) * (-cam.fx * fz2) + GJ(1, 1) * (-cam.fy * fz2) +
              GJ(0, 2) * (2 * cam.fx * tx / (tz * tz * tz)) +
              GJ(1, 2) * (2 * cam.fy * ty / (tz * tz * tz));
    Vec3 gwpos = cam.R.transpose() * gt;
    for (int k = 0; k < 3; ++k) gpos(i, k) += gwpos[k];
  }
}

inline void check_finite_attrs(const Tensor& t, const char* name) {
  std::vector<long> bad;
  for (long i = 0; i < t.rows() && long(bad.size()) < 8; ++i)
    for (long j = 0; j < t.cols(); ++j)
      if (!std::isfinite(t(i, j))) {
        bad.push_back(i);
        break;
      }
  if (bad.empty()) return;
  std::string msg = std::string("render: non-finite ") + name + " at rows";
  for (long i : bad) msg += " " + std::to_string(i);
  throw error(msg);
}

}  // namespace detail

struct RenderResult {
  Tensor img;  // (H*W, 6): rgb, alpha, sem_face, sem_hair
  std::shared_ptr<detail::RasterContext> ctx;
};

inline RenderResult render_forward(const Tensor& pos, const Tensor& scale, const Tensor& quat,
                                   const Tensor& opacity, const Tensor& color,
                                   const RasterParams& prm) {
  long M = pos.rows();
  GS_CHECK(scale.rows() == M && quat.rows() == M && opacity.rows() == M && color.rows() == M,
           "render: row mismatch");
  GS_CHECK(prm.semantic.empty() || long(prm.semantic.size()) == M, "render: semantic size");
  detail::check_finite_attrs(pos, "position");
  detail::check_finite_attrs(scale, "scale");
  detail::check_finite_attrs(quat, "rotation");
  detail::check_finite_attrs(opacity, "opacity");
  detail::check_finite_attrs(color, "color");
  auto ctx = std::make_shared<detail::RasterContext>();
  ctx->prm = prm;
  ctx->M = M;
  ctx->proj.resize(size_t(M));
  for (long i = 0; i < M; ++i)
    ctx->proj[size_t(i)] = project_gaussian(Vec3(pos(i, 0), pos(i, 1), pos(i, 2)),
                                            Vec3(scale(i, 0), scale(i, 1), scale(i, 2)),
                                            Vec4(quat(i, 0), quat(i, 1), quat(i, 2), quat(i, 3)),
                                            prm);
  detail::build_tiles(*ctx);
  ctx->n_proc.assign(size_t(prm.cam.W * prm.cam.H), 0);
  Tensor out(prm.cam.H * prm.cam.W, 6);
  int workers = std::max(1, prm.threads);
  if (workers == 1) {
    detail::forward_tiles(*ctx, opacity, color, out, 0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] { detail::forward_tiles(*ctx, opacity, color, out, w, workers); });
    for (auto& th : pool) th.join();
  }
  return {std::move(out), ctx};
}

// Differentiable entry point.
inline Var rasterize(const Var& pos, const Var& scale, const Var& quat, const Var& opacity,
                     const Var& color, const RasterParams& prm) {
  RenderResult res = render_forward(pos->val, scale->val, quat->val, opacity->val, color->val, prm);
  auto ctx = res.ctx;
  return make_op(std::move(res.img), {pos, scale, quat, opacity, color},
                 [pos, scale, quat, opacity, color, ctx](Node& n) {
                   long M = ctx->M;
                   int workers = std::max(1, ctx->prm.threads);
                   std::vector<detail::GaussGrad> buf(static_cast<size_t>(workers), detail::GaussGrad(M));
                   if (workers == 1) {
                     detail::backward_tiles(*ctx, opacity->val, color->val, n.val, n.grad, buf[0],
                                            0, 1);
                   } else {
                     std::vector<std::thread> pool;
                     for (int w = 0; w < workers; ++w)
                       pool.emplace_back([&, w] {
                         detail::backward_tiles(*ctx, opacity->val, color->val, n.val, n.grad,
                                                buf[size_t(w)], w, workers);
                       });
                     for (auto& th : pool) th.join();
                     for (int w = 1; w < workers; ++w) buf[0].add(buf[size_t(w)]);
                   }
                   detail::GaussGrad& gg = buf[0];
                   if (opacity->requires_grad) opacity->accum_grad(gg.opacity);
                   if (color->requires_grad) color->accum_grad(gg.color);
                   if (pos->requires_grad || scale->requires_grad || quat->requires_grad) {
                     Tensor gpos(M, 3), gscale(M, 3), gquat(M, 4);
                     detail::backward_projection(*ctx, pos->val, scale->val, quat->val, gg, gpos,
                                                 gscale, gquat);
                     if (pos->requires_grad) pos->accum_grad(gpos);
                     if (scale->requires_grad) scale->accum_grad(gscale);
                     if (quat->requires_grad) quat->accum_grad(gquat);
                   }
                 });
}

}  // namespace gsavatar
