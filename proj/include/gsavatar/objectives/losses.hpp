#pragma once

#include "gsavatar/config.hpp"
#include "gsavatar/core/nn.hpp"
#include "gsavatar/core/ops_image.hpp"

namespace gsavatar {

// Images flow through the losses as (C, H*W) grids in [0,1].

struct LossWeights {
  real lambda_ssim = 0.5;
  real lambda_lpips = 0.02;
  real lambda_hair = 0.3;
  real lambda_seg = 0.3;
  real lambda_pos = 0.1;
  real lambda_scale = 0.1;
  real eps_pos = 0.05;
  real eps_scale = 0.03;

  static LossWeights from_config(const Config& cfg, real mean_edge_len) {
    LossWeights w;
    w.lambda_ssim = cfg.lambda_ssim;
    w.lambda_lpips = cfg.lambda_lpips;
    w.lambda_hair = cfg.lambda_hair;
    w.lambda_seg = cfg.lambda_seg;
    w.lambda_pos = cfg.lambda_pos;
    w.lambda_scale = cfg.lambda_scale;
    w.eps_pos = cfg.eps_pos > 0 ? cfg.eps_pos : mean_edge_len;
    w.eps_scale = cfg.eps_scale_factor * (cfg.eps_pos > 0 ? cfg.eps_pos : mean_edge_len);
    return w;
  }
};

inline Var mse(const Var& a, const Var& b) { return mean_all(square(sub(a, b))); }

inline Var l1(const Var& a, const Var& b) { return mean_all(abs_op(sub(a, b))); }

// Structural similarity with an 11x11 Gaussian window (sigma 1.5) and the
// standard stabilizers for unit dynamic range.
inline Var ssim(const Var& x, const Var& y, long H, long W) {
  GS_CHECK(x->val.cols() == H * W && y->val.cols() == H * W, "ssim: shape");
  const real c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  static const std::vector<real> kern = gaussian_kernel(11, 1.5);
  Var mx = gaussian_blur(x, H, W, kern);
  Var my = gaussian_blur(y, H, W, kern);
  Var mxx = gaussian_blur(mul(x, x), H, W, kern);
  Var myy = gaussian_blur(mul(y, y), H, W, kern);
  Var mxy = gaussian_blur(mul(x, y), H, W, kern);
  Var vx = sub(mxx, mul(mx, mx));
  Var vy = sub(myy, mul(my, my));
  Var cxy = sub(mxy, mul(mx, my));
  Var num = mul(add_scalar(mul_scalar(mul(mx, my), 2.0), c1),
                add_scalar(mul_scalar(cxy, 2.0), c2));
  Var den = mul(add_scalar(add(mul(mx, mx), mul(my, my)), c1),
                add_scalar(add(vx, vy), c2));
  return mean_all(mul(num, reciprocal(den)));
}

inline real ssim_value(const Tensor& x, const Tensor& y, long H, long W) {
  return ssim(constant(x), constant(y), H, W)->val(0, 0);
}

// PSNR in dB over [0,1] images; capped at 100 dB for vanishing error.
inline real psnr_value(const Tensor& x, const Tensor& y) {
  GS_CHECK(x.rows() == y.rows() && x.cols() == y.cols(), "psnr: shape");
  real m = 0;
  for (size_t i = 0; i < x.v.size(); ++i) {
    real d = x.v[i] - y.v[i];
    m += d * d;
  }
  m /= real(x.v.size());
  if (m < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / m);
}

// Perceptual stand-in: squared feature distance through a fixed, seeded,
// purely linear conv pyramid (identity level + three stride-2 levels). Linear
// features keep the distance exactly monotone under blending toward the
// target and zero only for equal images.
struct PerceptualProxy {
  std::vector<Var> w, b;  // per level, constants
  long ch = 8;

  explicit PerceptualProxy(uint64_t seed = 4242) {
    Rng rng(seed, 99);
    long cin = 3;
    for (int l = 0; l < 3; ++l) {
      w.push_back(constant(normal_init(ch, cin * 9, 0.35, rng)));
      b.push_back(constant(Tensor(1, ch)));
      cin = ch;
    }
  }

  Var operator()(const Var& pred, const Var& gt, long H, long W) const {
    Var diff0 = mse(pred, gt);
    Var total = diff0;
    Var fp = pred, fg = gt;
    long h = H, wd = W;
    for (size_t l = 0; l < w.size(); ++l) {
      fp = conv2d(fp, w[l], b[l], h, wd, 3, 2, 1);
      fg = conv2d(fg, w[l], b[l], h, wd, 3, 2, 1);
      h = (h + 1) / 2;
      wd = (wd + 1) / 2;
      total = add(total, mse(fp, fg));
    }
    return mul_scalar(total, 1.0 / real(w.size() + 1));
  }
};

inline Var loss_photo(const Var& pred, const Var& gt, long H, long W, const LossWeights& lw,
                      const PerceptualProxy& proxy) {
  Var out = l1(pred, gt);
  out = add(out, mul_scalar(add_scalar(mul_scalar(ssim(pred, gt, H, W), -1.0), 1.0),
                            lw.lambda_ssim));
  return add(out, mul_scalar(proxy(pred, gt, H, W), lw.lambda_lpips));
}

// pred_hair: hair-only render; gt_hair: image masked to the hair region;
// pred_seg/gt_seg: 2-channel face/hair coverage.
inline Var loss_hair_region(const Var& pred_hair, const Var& gt_hair, const Var& pred_seg,
                            const Var& gt_seg, const LossWeights& lw) {
  return add(mul_scalar(mse(pred_hair, gt_hair), lw.lambda_hair),
             mul_scalar(mse(pred_seg, gt_seg), lw.lambda_seg));
}

// Thresholded L2 penalties: squared hinge on the offset norm (mean over
// Gaussians) and on each scale axis (mean over Gaussians, summed over axes).
inline Var loss_reg(const Var& dpos, const Var& sigma, const LossWeights& lw) {
  Var pos_pen = mean_all(square(relu(add_scalar(row_norm(dpos), -lw.eps_pos))));
  Var scale_pen =
      mul_scalar(mean_all(square(relu(add_scalar(sigma, -lw.eps_scale)))), real(sigma->val.cols()));
  return add(mul_scalar(pos_pen, lw.lambda_pos), mul_scalar(scale_pen, lw.lambda_scale));
}

struct LossBreakdown {
  real total = 0, photo = 0, hair = 0, reg = 0;
};

}  // namespace gsavatar
