#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "gsavatar/core/tensor.hpp"

namespace gsavatar {

// Reverse-mode tape over Tensor values. Nodes own their forward value and a
// lazily allocated gradient buffer; the backward closure of each op reads the
// node's gradient and accumulates into its parents. Graphs are rebuilt every
// step (dynamic), so closures capture whatever forward state they need.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backfn;

  Tensor& ensure_grad() {
    if (!grad_ready) {
      grad = Tensor(val.shape);
      grad_ready = true;
    }
    return grad;
  }

  void accum_grad(const Tensor& g) {
    Tensor& t = ensure_grad();
    GS_CHECK(t.numel() == g.numel(), "grad shape mismatch");
    for (long i = 0; i < t.numel(); ++i) t.v[size_t(i)] += g.v[size_t(i)];
  }

  void zero_grad() {
    if (grad_ready) grad.fill(0.0);
  }
};

inline Var make_var(Tensor val, bool requires_grad = false) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->requires_grad = requires_grad;
  return n;
}

inline Var constant(Tensor val) { return make_var(std::move(val), false); }

inline Var scalar_var(real x) {
  Tensor t(1, 1);
  t.v[0] = x;
  return constant(std::move(t));
}

inline Var make_op(Tensor val, std::vector<Var> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backfn = std::move(back);
  }
  return n;
}

// Reverse topological sweep from `root`. Seeds the root gradient with ones
// unless the caller already populated it.
inline void backward(const Var& root) {
  if (!root->requires_grad) return;
  if (!root->grad_ready) {
    root->ensure_grad();
    root->grad.fill(1.0);
  }
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i].get();
      ++i;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backfn && n->grad_ready) n->backfn(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise and broadcast primitives

inline Var add(const Var& a, const Var& b) {
  GS_CHECK(a->val.same_shape(b->val), "add: shape mismatch");
  Tensor out = a->val;
  for (long i = 0; i < out.numel(); ++i) out.v[size_t(i)] += b->val.v[size_t(i)];
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accum_grad(n.grad);
    if (b->requires_grad) b->accum_grad(n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  GS_CHECK(a->val.same_shape(b->val), "sub: shape mismatch");
  Tensor out = a->val;
  for (long i = 0; i < out.numel(); ++i) out.v[size_t(i)] -= b->val.v[size_t(i)];
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accum_grad(n.grad);
    if (b->requires_grad) {
      Tensor g = n.grad;
      for (auto& x : g.v) x = -x;
      b->accum_grad(g);
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  GS_CHECK(a->val.same_shape(b->val), "mul: shape mismatch");
  Tensor out = a->val;
  for (long i = 0; i < out.numel(); ++i) out.v[size_t(i)] *= b->val.v[size_t(i)];
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor g = n.grad;
      for (long i = 0; i < g.numel(); ++i) g.v[size_t(i)] *= b->val.v[size_t(i)];
      a->accum_grad(g);
    }
    if (b->requires_grad) {
      Tensor g = n.grad;
      for (long i = 0; i < g.numel(); ++i) g.v[size_t(i)] *= a->val.v[size_t(i)];
      b->accum_grad(g);
    }
  });
}

inline Var add_scalar(const Var& a, real s) {
  Tensor out = a->val;
  for (auto& x : out.v) x += s;
  return make_op(std::move(out), {a}, [a](Node& n) { a->accum_grad(n.grad); });
}

inline Var mul_scalar(const Var& a, real s) {
  Tensor out = a->val;
  for (auto& x : out.v) x *= s;
  return make_op(std::move(out), {a}, [a, s](Node& n) {
    Tensor g = n.grad;
    for (auto& x : g.v) x *= s;
    a->accum_grad(g);
  });
}

inline Var reciprocal(const Var& a) {
  Tensor out = a->val;
  for (auto& x : out.v) x = 1.0 / x;
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor g = n.grad;
    for (long i = 0; i < g.numel(); ++i) {
      real y = n.val.v[size_t(i)];
      g.v[size_t(i)] *= -y * y;
    }
    a->accum_grad(g);
  });
}

// a:(R,C) + b:(1,C)
inline Var add_broadcast_row(const Var& a, const Var& b) {
  long R = a->val.rows(), C = a->val.cols();
  GS_CHECK(b->val.rows() == 1 && b->val.cols() == C, "add_broadcast_row: shape");
  Tensor out = a->val;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) out(r, c) += b->val(0, c);
  return make_op(std::move(out), {a, b}, [a, b, R, C](Node& n) {
    if (a->requires_grad) a->accum_grad(n.grad);
    if (b->requires_grad) {
      Tensor g(1, C);
      for (long r = 0; r < R; ++r)
        for (long c = 0; c < C; ++c) g(0, c) += n.grad(r, c);
      b->accum_grad(g);
    }
  });
}

// a:(R,C) * b:(1,C)
inline Var mul_broadcast_row(const Var& a, const Var& b) {
  long R = a->val.rows(), C = a->val.cols();
  GS_CHECK(b->val.rows() == 1 && b->val.cols() == C, "mul_broadcast_row: shape");
  Tensor out = a->val;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) out(r, c) *= b->val(0, c);
  return make_op(std::move(out), {a, b}, [a, b, R, C](Node& n) {
    if (a->requires_grad) {
      Tensor g(R, C);
      for (long r = 0; r < R; ++r)
        for (long c = 0; c < C; ++c) g(r, c) = n.grad(r, c) * b->val(0, c);
      a->accum_grad(g);
    }
    if (b->requires_grad) {
      Tensor g(1, C);
      for (long r = 0; r < R; ++r)
        for (long c = 0; c < C; ++c) g(0, c) += n.grad(r, c) * a->val(r, c);
      b->accum_grad(g);
    }
  });
}

// a:(R,C) * b:(R,1)
inline Var mul_broadcast_col(const Var& a, const Var& b) {
  long R = a->val.rows(), C = a->val.cols();
  GS_CHECK(b->val.rows() == R && b->val.cols() == 1, "mul_broadcast_col: shape");
  Tensor out = a->val;
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) out(r, c) *= b->val(r, 0);
  return make_op(std::move(out), {a, b}, [a, b, R, C](Node& n) {
    if (a->requires_grad) {
      Tensor g(R, C);
      for (long r = 0; r < R; ++r)
        for (long c = 0; c < C; ++c) g(r, c) = n.grad(r, c) * b->val(r, 0);
      a->accum_grad(g);
    }
    if (b->requires_grad) {
      Tensor g(R, 1);
      for (long r = 0; r < R; ++r) {
        real s = 0;
        for (long c = 0; c < C; ++c) s += n.grad(r, c) * a->val(r, c);
        g(r, 0) = s;
      }
      b->accum_grad(g);
    }
  });
}

// ---------------------------------------------------------------------------
// matmul

inline Var matmul(const Var& a, const Var& b, bool ta = false, bool tb = false) {
  long am = ta ? a->val.cols() : a->val.rows();
  long ak = ta ? a->val.rows() : a->val.cols();
  long bk = tb ? b->val.cols() : b->val.rows();
  long bn = tb ? b->val.rows() : b->val.cols();
  GS_CHECK(ak == bk, "matmul: inner dim mismatch");
  Tensor out(am, bn);
  {
    auto A = a->val.mat();
    auto B = b->val.mat();
    auto O = out.mat();
    if (!ta && !tb)
      O.noalias() = A * B;
    else if (ta && !tb)
      O.noalias() = A.transpose() * B;
    else if (!ta && tb)
      O.noalias() = A * B.transpose();
    else
      O.noalias() = A.transpose() * B.transpose();
  }
  return make_op(std::move(out), {a, b}, [a, b, ta, tb](Node& n) {
    auto G = n.grad.mat();
    auto A = a->val.mat();
    auto B = b->val.mat();
    if (a->requires_grad) {
      Tensor ga(a->val.rows(), a->val.cols());
      auto GA = ga.mat();
      if (!ta && !tb)
        GA.noalias() = G * B.transpose();
      else if (!ta && tb)
        GA.noalias() = G * B;
      else if (ta && !tb)
        GA.noalias() = B * G.transpose();
      else
        GA.noalias() = B.transpose() * G.transpose();
      a->accum_grad(ga);
    }
    if (b->requires_grad) {
      Tensor gb(b->val.rows(), b->val.cols());
      auto GB = gb.mat();
      if (!ta && !tb)
        GB.noalias() = A.transpose() * G;
      else if (!ta && tb)
        GB.noalias() = G.transpose() * A;
      else if (ta && !tb)
        GB.noalias() = A * G;
      else
        GB.noalias() = G.transpose() * A.transpose();
      b->accum_grad(gb);
    }
  });
}

// ---------------------------------------------------------------------------
// slicing / concatenation / gathering

inline Var slice_cols(const Var& a, long c0, long c1) {
  long R = a->val.rows(), C = a->val.cols();
  GS_CHECK(0 <= c0 && c0 < c1 && c1 <= C, "slice_cols: range");
  Tensor out(R, c1 - c0);
  for (long r = 0; r < R; ++r)
    for (long c = c0; c < c1; ++c) out(r, c - c0) = a->val(r, c);
  return make_op(std::move(out), {a}, [a, c0, c1, R, C](Node& n) {
    Tensor g(R, C);
    for (long r = 0; r < R; ++r)
      for (long c = c0; c < c1; ++c) g(r, c) = n.grad(r, c - c0);
    a->accum_grad(g);
  });
}

inline Var slice_rows(const Var& a, long r0, long r1) {
  long R = a->val.rows(), C = a->val.cols();
  GS_CHECK(0 <= r0 && r0 < r1 && r1 <= R, "slice_rows: range");
  Tensor out(r1 - r0, C);
  std::copy(a->val.v.begin() + r0 * C, a->val.v.begin() + r1 * C, out.v.begin());
  return make_op(std::move(out), {a}, [a, r0, r1, R, C](Node& n) {
    Tensor g(R, C);
    std::copy(n.grad.v.begin(), n.grad.v.end(), g.v.begin() + r0 * C);
    a->accum_grad(g);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  GS_CHECK(!parts.empty(), "concat_cols: empty");
  long R = parts[0]->val.rows(), C = 0;
  for (const auto& p : parts) {
    GS_CHECK(p->val.rows() == R, "concat_cols: row mismatch");
    C += p->val.cols();
  }
  Tensor out(R, C);
  long off = 0;
  for (const auto& p : parts) {
    long pc = p->val.cols();
    for (long r = 0; r < R; ++r)
      for (long c = 0; c < pc; ++c) out(r, off + c) = p->val(r, c);
    off += pc;
  }
  return make_op(std::move(out), parts, [parts, R](Node& n) {
    long off = 0;
    for (const auto& p : parts) {
      long pc = p->val.cols();
      if (p->requires_grad) {
        Tensor g(R, pc);
        for (long r = 0; r < R; ++r)
          for (long c = 0; c < pc; ++c) g(r, c) = n.grad(r, off + c);
        p->accum_grad(g);
      }
      off += pc;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  GS_CHECK(!parts.empty(), "concat_rows: empty");
  long C = parts[0]->val.cols(), R = 0;
  for (const auto& p : parts) {
    GS_CHECK(p->val.cols() == C, "concat_rows: col mismatch");
    R += p->val.rows();
  }
  Tensor out(R, C);
  long off = 0;
  for (const auto& p : parts) {
    std::copy(p->val.v.begin(), p->val.v.end(), out.v.begin() + off * C);
    off += p->val.rows();
  }
  return make_op(std::move(out), parts, [parts, C](Node& n) {
    long off = 0;
    for (const auto& p : parts) {
      long pr = p->val.rows();
      if (p->requires_grad) {
        Tensor g(pr, C);
        std::copy(n.grad.v.begin() + off * C, n.grad.v.begin() + (off + pr) * C, g.v.begin());
        p->accum_grad(g);
      }
      off += pr;
    }
  });
}

inline Var transpose(const Var& a) {
  long R = a->val.rows(), C = a->val.cols();
  Tensor out(C, R);
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) out(c, r) = a->val(r, c);
  return make_op(std::move(out), {a}, [a, R, C](Node& n) {
    Tensor g(R, C);
    for (long r = 0; r < R; ++r)
      for (long c = 0; c < C; ++c) g(r, c) = n.grad(c, r);
    a->accum_grad(g);
  });
}

inline Var reshape(const Var& a, long r, long c) {
  GS_CHECK(r * c == a->val.numel(), "reshape: numel mismatch");
  Tensor out(r, c);
  out.v = a->val.v;
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor g(a->val.shape);
    g.v = n.grad.v;
    a->accum_grad(g);
  });
}

inline Var gather_rows(const Var& a, std::vector<long> idx) {
  long C = a->val.cols(), R = a->val.rows();
  Tensor out(long(idx.size()), C);
  for (size_t i = 0; i < idx.size(); ++i) {
    GS_CHECK(idx[i] >= 0 && idx[i] < R, "gather_rows: index");
    for (long c = 0; c < C; ++c) out(long(i), c) = a->val(idx[i], c);
  }
  return make_op(std::move(out), {a}, [a, idx = std::move(idx), R, C](Node& n) {
    Tensor g(R, C);
    for (size_t i = 0; i < idx.size(); ++i)
      for (long c = 0; c < C; ++c) g(idx[i], c) += n.grad(long(i), c);
    a->accum_grad(g);
  });
}

// ---------------------------------------------------------------------------
// nonlinearities

namespace detail {
template <class F, class D>
Var unary(const Var& a, F f, D dfdx_from_xy) {
  Tensor out = a->val;
  for (auto& x : out.v) x = f(x);
  return make_op(std::move(out), {a}, [a, dfdx_from_xy](Node& n) {
    Tensor g = n.grad;
    for (long i = 0; i < g.numel(); ++i)
      g.v[size_t(i)] *= dfdx_from_xy(a->val.v[size_t(i)], n.val.v[size_t(i)]);
    a->accum_grad(g);
  });
}
}  // namespace detail

inline Var relu(const Var& a) {
  return detail::unary(
      a, [](real x) { return x > 0 ? x : 0; }, [](real x, real) { return x > 0 ? 1.0 : 0.0; });
}

inline Var abs_op(const Var& a) {
  return detail::unary(
      a, [](real x) { return std::abs(x); },
      [](real x, real) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Var square(const Var& a) {
  return detail::unary(
      a, [](real x) { return x * x; }, [](real x, real) { return 2.0 * x; });
}

inline Var sin_op(const Var& a) {
  return detail::unary(
      a, [](real x) { return std::sin(x); }, [](real x, real) { return std::cos(x); });
}

inline Var tanh_op(const Var& a) {
  return detail::unary(
      a, [](real x) { return std::tanh(x); }, [](real, real y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a, [](real x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](real, real y) { return y * (1.0 - y); });
}

inline Var softplus(const Var& a) {
  return detail::unary(
      a, [](real x) { return x > 30 ? x : std::log1p(std::exp(x)); },
      [](real x, real) { return 1.0 / (1.0 + std::exp(-x)); });
}

// ---------------------------------------------------------------------------
// row-structured ops

inline Var softmax_rows(const Var& a) {
  long R = a->val.rows(), C = a->val.cols();
  Tensor out(R, C);
  for (long r = 0; r < R; ++r) {
    real m = -1e300;
    for (long c = 0; c < C; ++c) m = std::max(m, a->val(r, c));
    real s = 0;
    for (long c = 0; c < C; ++c) {
      out(r, c) = std::exp(a->val(r, c) - m);
      s += out(r, c);
    }
    for (long c = 0; c < C; ++c) out(r, c) /= s;
  }
  return make_op(std::move(out), {a}, [a, R, C](Node& n) {
    Tensor g(R, C);
    for (long r = 0; r < R; ++r) {
      real dot = 0;
      for (long c = 0; c < C; ++c) dot += n.grad(r, c) * n.val(r, c);
      for (long c = 0; c < C; ++c) g(r, c) = n.val(r, c) * (n.grad(r, c) - dot);
    }
    a->accum_grad(g);
  });
}

inline Var layernorm_rows(const Var& a, real eps = 1e-5) {
  long R = a->val.rows(), C = a->val.cols();
  Tensor out(R, C);
  std::vector<real> inv(static_cast<size_t>(R));
  for (long r = 0; r < R; ++r) {
    real mu = 0;
    for (long c = 0; c < C; ++c) mu += a->val(r, c);
    mu /= real(C);
    real var = 0;
    for (long c = 0; c < C; ++c) {
      real d = a->val(r, c) - mu;
      var += d * d;
    }
    var /= real(C);
    real iv = 1.0 / std::sqrt(var + eps);
    inv[size_t(r)] = iv;
    for (long c = 0; c < C; ++c) out(r, c) = (a->val(r, c) - mu) * iv;
  }
  return make_op(std::move(out), {a}, [a, R, C, inv = std::move(inv)](Node& n) {
    Tensor g(R, C);
    for (long r = 0; r < R; ++r) {
      real gm = 0, gym = 0;
      for (long c = 0; c < C; ++c) {
        gm += n.grad(r, c);
        gym += n.grad(r, c) * n.val(r, c);
      }
      gm /= real(C);
      gym /= real(C);
      for (long c = 0; c < C; ++c)
        g(r, c) = inv[size_t(r)] * (n.grad(r, c) - gm - n.val(r, c) * gym);
    }
    a->accum_grad(g);
  });
}

inline Var l2normalize_rows(const Var& a, real eps = 1e-12) {
  long R = a->val.rows(), C = a->val.cols();
  Tensor out(R, C);
  std::vector<real> norms(static_cast<size_t>(R));
  for (long r = 0; r < R; ++r) {
    real s = 0;
    for (long c = 0; c < C; ++c) s += a->val(r, c) * a->val(r, c);
    real nrm = std::sqrt(s + eps);
    norms[size_t(r)] = nrm;
    for (long c = 0; c < C; ++c) out(r, c) = a->val(r, c) / nrm;
  }
  return make_op(std::move(out), {a}, [a, R, C, norms = std::move(norms)](Node& n) {
    Tensor g(R, C);
    for (long r = 0; r < R; ++r) {
      real dot = 0;
      for (long c = 0; c < C; ++c) dot += n.grad(r, c) * n.val(r, c);
      real nrm = norms[size_t(r)];
      for (long c = 0; c < C; ++c) g(r, c) = (n.grad(r, c) - n.val(r, c) * dot) / nrm;
    }
    a->accum_grad(g);
  });
}

inline Var row_norm(const Var& a, real eps = 1e-12) {
  long R = a->val.rows(), C = a->val.cols();
  Tensor out(R, 1);
  for (long r = 0; r < R; ++r) {
    real s = 0;
    for (long c = 0; c < C; ++c) s += a->val(r, c) * a->val(r, c);
    out(r, 0) = std::sqrt(s + eps);
  }
  return make_op(std::move(out), {a}, [a, R, C](Node& n) {
    Tensor g(R, C);
    for (long r = 0; r < R; ++r)
      for (long c = 0; c < C; ++c) g(r, c) = n.grad(r, 0) * a->val(r, c) / n.val(r, 0);
    a->accum_grad(g);
  });
}

inline Var sum_all(const Var& a) {
  Tensor out(1, 1);
  for (real x : a->val.v) out.v[0] += x;
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor g(a->val.shape);
    for (auto& x : g.v) x = n.grad.v[0];
    a->accum_grad(g);
  });
}

inline Var mean_all(const Var& a) {
  long N = a->val.numel();
  Tensor out(1, 1);
  for (real x : a->val.v) out.v[0] += x;
  out.v[0] /= real(N);
  return make_op(std::move(out), {a}, [a, N](Node& n) {
    Tensor g(a->val.shape);
    for (auto& x : g.v) x = n.grad.v[0] / real(N);
    a->accum_grad(g);
  });
}

// Rows come in contiguous blocks of `block` entries; output row r is the sum
// of all rows of its block up to and including r.
inline Var prefix_sum_blocks(const Var& a, long block) {
  long R = a->val.rows(), C = a->val.cols();
  GS_CHECK(block > 0 && R % block == 0, "prefix_sum_blocks: bad block");
  Tensor out(R, C);
  for (long b = 0; b < R / block; ++b)
    for (long c = 0; c < C; ++c) {
      real acc = 0;
      for (long s = 0; s < block; ++s) {
        acc += a->val(b * block + s, c);
        out(b * block + s, c) = acc;
      }
    }
  return make_op(std::move(out), {a}, [a, block, R, C](Node& n) {
    Tensor g(R, C);
    for (long b = 0; b < R / block; ++b)
      for (long c = 0; c < C; ++c) {
        real acc = 0;
        for (long s = block - 1; s >= 0; --s) {
          acc += n.grad(b * block + s, c);
          g(b * block + s, c) = acc;
        }
      }
    a->accum_grad(g);
  });
}

// y_r = R_r * x_r with per-row constant rotation matrices.
inline Var rowwise_rotate_const(std::shared_ptr<std::vector<Mat3>> rot, const Var& x) {
  long R = x->val.rows();
  GS_CHECK(x->val.cols() == 3 && long(rot->size()) == R, "rowwise_rotate_const: shape");
  Tensor out(R, 3);
  for (long r = 0; r < R; ++r) {
    Vec3 v(x->val(r, 0), x->val(r, 1), x->val(r, 2));
    Vec3 y = (*rot)[size_t(r)] * v;
    out(r, 0) = y.x();
    out(r, 1) = y.y();
    out(r, 2) = y.z();
  }
  return make_op(std::move(out), {x}, [x, rot, R](Node& n) {
    Tensor g(R, 3);
    for (long r = 0; r < R; ++r) {
      Vec3 gv(n.grad(r, 0), n.grad(r, 1), n.grad(r, 2));
      Vec3 gx = (*rot)[size_t(r)].transpose() * gv;
      g(r, 0) = gx.x();
      g(r, 1) = gx.y();
      g(r, 2) = gx.z();
    }
    x->accum_grad(g);
  });
}

// Hamilton product q_out = q_left ⊗ q with constant per-row left factors
// (wxyz layout). Linear in q, so the backward is the transposed map.
inline Var quat_premul_const(std::shared_ptr<std::vector<Vec4>> left, const Var& q) {
  long R = q->val.rows();
  GS_CHECK(q->val.cols() == 4 && long(left->size()) == R, "quat_premul_const: shape");
  auto lmat = [](const Vec4& f) {
    Mat4 L;
    real w = f[0], x = f[1], y = f[2], z = f[3];
    L << w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w;
    return L;
  };
  Tensor out(R, 4);
  for (long r = 0; r < R; ++r) {
    Vec4 v(q->val(r, 0), q->val(r, 1), q->val(r, 2), q->val(r, 3));
    Vec4 y = lmat((*left)[size_t(r)]) * v;
    for (long c = 0; c < 4; ++c) out(r, c) = y[c];
  }
  return make_op(std::move(out), {q}, [q, left, lmat, R](Node& n) {
    Tensor g(R, 4);
    for (long r = 0; r < R; ++r) {
      Vec4 gv(n.grad(r, 0), n.grad(r, 1), n.grad(r, 2), n.grad(r, 3));
      Vec4 gq = lmat((*left)[size_t(r)]).transpose() * gv;
      for (long c = 0; c < 4; ++c) g(r, c) = gq[c];
    }
    q->accum_grad(g);
  });
}

}  // namespace gsavatar
