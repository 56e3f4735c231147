#pragma once

#include "gsavatar/core/graph.hpp"

namespace gsavatar {

// Image activations are stored as (C, H*W) row-major grids; H and W travel
// alongside as plain integers.

namespace detail {
// col matrix: (Cin*k*k, Ho*Wo)
inline Tensor im2col(const Tensor& x, long H, long W, long k, long stride, long pad) {
  long Cin = x.rows();
  long Ho = (H + 2 * pad - k) / stride + 1;
  long Wo = (W + 2 * pad - k) / stride + 1;
  Tensor col(Cin * k * k, Ho * Wo);
  for (long c = 0; c < Cin; ++c)
    for (long ky = 0; ky < k; ++ky)
      for (long kx = 0; kx < k; ++kx) {
        long row = (c * k + ky) * k + kx;
        for (long oy = 0; oy < Ho; ++oy) {
          long iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (long ox = 0; ox < Wo; ++ox) {
            long ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            col(row, oy * Wo + ox) = x(c, iy * W + ix);
          }
        }
      }
  return col;
}

inline void col2im_accum(const Tensor& col, Tensor& gx, long H, long W, long k, long stride,
                         long pad) {
  long Cin = gx.rows();
  long Ho = (H + 2 * pad - k) / stride + 1;
  long Wo = (W + 2 * pad - k) / stride + 1;
  for (long c = 0; c < Cin; ++c)
    for (long ky = 0; ky < k; ++ky)
      for (long kx = 0; kx < k; ++kx) {
        long row = (c * k + ky) * k + kx;
        for (long oy = 0; oy < Ho; ++oy) {
          long iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (long ox = 0; ox < Wo; ++ox) {
            long ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            gx(c, iy * W + ix) += col(row, oy * Wo + ox);
          }
        }
      }
}
}  // namespace detail

// x:(Cin,H*W), w:(Cout, Cin*k*k), b:(1,Cout) -> (Cout, Ho*Wo)
inline Var conv2d(const Var& x, const Var& w, const Var& b, long H, long W, long k, long stride,
                  long pad) {
  long Cin = x->val.rows(), Cout = w->val.rows();
  GS_CHECK(w->val.cols() == Cin * k * k, "conv2d: weight shape");
  GS_CHECK(x->val.cols() == H * W, "conv2d: input shape");
  long Ho = (H + 2 * pad - k) / stride + 1;
  long Wo = (W + 2 * pad - k) / stride + 1;
  auto col = std::make_shared<Tensor>(detail::im2col(x->val, H, W, k, stride, pad));
  Tensor out(Cout, Ho * Wo);
  out.mat().noalias() = w->val.mat() * col->mat();
  for (long c = 0; c < Cout; ++c)
    for (long i = 0; i < Ho * Wo; ++i) out(c, i) += b->val(0, c);
  return make_op(std::move(out), {x, w, b}, [x, w, b, col, H, W, k, stride, pad, Cout](Node& n) {
    if (w->requires_grad) {
      Tensor gw(w->val.rows(), w->val.cols());
      gw.mat().noalias() = n.grad.mat() * col->mat().transpose();
      w->accum_grad(gw);
    }
    if (b->requires_grad) {
      Tensor gb(1, Cout);
      for (long c = 0; c < Cout; ++c)
        for (long i = 0; i < n.grad.cols(); ++i) gb(0, c) += n.grad(c, i);
      b->accum_grad(gb);
    }
    if (x->requires_grad) {
      Tensor gcol(col->rows(), col->cols());
      gcol.mat().noalias() = w->val.mat().transpose() * n.grad.mat();
      Tensor gx(x->val.rows(), x->val.cols());
      detail::col2im_accum(gcol, gx, H, W, k, stride, pad);
      x->accum_grad(gx);
    }
  });
}

// Adaptive average pooling from (C, H*W) to (C, h*w).
inline Var avg_pool_to(const Var& x, long H, long W, long h, long w) {
  long C = x->val.rows();
  GS_CHECK(x->val.cols() == H * W, "avg_pool_to: input shape");
  Tensor out(C, h * w);
  auto bound = [](long o, long n, long N) {
    return std::pair<long, long>{(o * N) / n, ((o + 1) * N + n - 1) / n};
  };
  for (long c = 0; c < C; ++c)
    for (long oy = 0; oy < h; ++oy) {
      auto [y0, y1] = bound(oy, h, H);
      for (long ox = 0; ox < w; ++ox) {
        auto [x0, x1] = bound(ox, w, W);
        real s = 0;
        for (long iy = y0; iy < y1; ++iy)
          for (long ix = x0; ix < x1; ++ix) s += x->val(c, iy * W + ix);
        out(c, oy * w + ox) = s / real((y1 - y0) * (x1 - x0));
      }
    }
  return make_op(std::move(out), {x}, [x, H, W, h, w, C, bound](Node& n) {
    Tensor g(C, H * W);
    for (long c = 0; c < C; ++c)
      for (long oy = 0; oy < h; ++oy) {
        auto [y0, y1] = bound(oy, h, H);
        for (long ox = 0; ox < w; ++ox) {
          auto [x0, x1] = bound(ox, w, W);
          real gv = n.grad(c, oy * w + ox) / real((y1 - y0) * (x1 - x0));
          for (long iy = y0; iy < y1; ++iy)
            for (long ix = x0; ix < x1; ++ix) g(c, iy * W + ix) += gv;
        }
      }
    x->accum_grad(g);
  });
}

// Separable blur with a symmetric kernel; the adjoint of a symmetric
// convolution is the same convolution, so backward reuses the forward stencil.
namespace detail {
inline Tensor blur2d(const Tensor& x, long H, long W, const std::vector<real>& kern) {
  long C = x.rows();
  long rad = long(kern.size()) / 2;
  Tensor tmp(C, H * W), out(C, H * W);
  for (long c = 0; c < C; ++c)
    for (long y = 0; y < H; ++y)
      for (long x0 = 0; x0 < W; ++x0) {
        real s = 0;
        for (long t = -rad; t <= rad; ++t) {
          long xx = std::clamp(x0 + t, 0L, W - 1);
          s += kern[size_t(t + rad)] * x(c, y * W + xx);
        }
        tmp(c, y * W + x0) = s;
      }
  for (long c = 0; c < C; ++c)
    for (long y = 0; y < H; ++y)
      for (long x0 = 0; x0 < W; ++x0) {
        real s = 0;
        for (long t = -rad; t <= rad; ++t) {
          long yy = std::clamp(y + t, 0L, H - 1);
          s += kern[size_t(t + rad)] * tmp(c, yy * W + x0);
        }
        out(c, y * W + x0) = s;
      }
  return out;
}
}  // namespace detail

inline std::vector<real> gaussian_kernel(long size, real sigma) {
  std::vector<real> k(static_cast<size_t>(size));
  long rad = size / 2;
  real s = 0;
  for (long i = 0; i < size; ++i) {
    real d = real(i - rad);
    k[size_t(i)] = std::exp(-d * d / (2 * sigma * sigma));
    s += k[size_t(i)];
  }
  for (auto& x : k) x /= s;
  return k;
}

inline Var gaussian_blur(const Var& x, long H, long W, const std::vector<real>& kern) {
  GS_CHECK(x->val.cols() == H * W, "gaussian_blur: input shape");
  Tensor out = detail::blur2d(x->val, H, W, kern);
  return make_op(std::move(out), {x}, [x, H, W, kern](Node& n) {
    // clamped-border blur is not exactly self-adjoint at edges; the adjoint
    // scatters with the same clamped taps, which is what blur2d on the grad
    // computes when taps are symmetric. Edge rows differ only by tap
    // reassociation, handled by the explicit adjoint below.
    long C = n.grad.rows();
    long rad = long(kern.size()) / 2;
    Tensor tmp(C, H * W), g(C, H * W);
    for (long c = 0; c < C; ++c)
      for (long y = 0; y < H; ++y)
        for (long x0 = 0; x0 < W; ++x0)
          for (long t = -rad; t <= rad; ++t) {
            long yy = std::clamp(y + t, 0L, H - 1);
            tmp(c, yy * W + x0) += kern[size_t(t + rad)] * n.grad(c, y * W + x0);
          }
    for (long c = 0; c < C; ++c)
      for (long y = 0; y < H; ++y)
        for (long x0 = 0; x0 < W; ++x0)
          for (long t = -rad; t <= rad; ++t) {
            long xx = std::clamp(x0 + t, 0L, W - 1);
            g(c, y * W + xx) += kern[size_t(t + rad)] * tmp(c, y * W + x0);
          }
    x->accum_grad(g);
  });
}

}  // namespace gsavatar
