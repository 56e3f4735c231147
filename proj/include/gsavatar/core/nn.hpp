#pragma once

#include <unordered_map>

#include "gsavatar/core/graph.hpp"
#include "gsavatar/core/hash.hpp"
#include "gsavatar/core/rng.hpp"

namespace gsavatar {

// Named parameter registry with stable insertion order (checksums, IO and the
// optimizer all rely on the order being reproducible).
struct ParamStore {
  std::vector<std::pair<std::string, Var>> items;
  std::unordered_map<std::string, size_t> index;

  Var add(const std::string& name, Tensor init) {
    GS_CHECK(!index.count(name), "duplicate parameter: " + name);
    Var v = make_var(std::move(init), true);
    index[name] = items.size();
    items.push_back({name, v});
    return v;
  }

  bool has(const std::string& name) const { return index.count(name) > 0; }

  Var at(const std::string& name) const {
    auto it = index.find(name);
    GS_CHECK(it != index.end(), "missing parameter: " + name);
    return items[it->second].second;
  }

  std::vector<Var> trainable() const {
    std::vector<Var> out;
    for (const auto& [name, v] : items)
      if (v->requires_grad) out.push_back(v);
    return out;
  }

  void set_trainable(const std::string& prefix, bool on) {
    for (auto& [name, v] : items)
      if (name.rfind(prefix, 0) == 0) v->requires_grad = on;
  }

  void zero_grads() {
    for (auto& [name, v] : items) v->zero_grad();
  }

  uint64_t checksum(const std::string& prefix = "") const {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& [name, v] : items) {
      if (name.rfind(prefix, 0) != 0) continue;
      h = fnv1a64(name.data(), name.size(), h);
      h = fnv1a64(v->val.v.data(), v->val.v.size() * sizeof(real), h);
    }
    return h;
  }

  long count(const std::string& prefix = "") const {
    long n = 0;
    for (const auto& [name, v] : items)
      if (name.rfind(prefix, 0) == 0) n += v->val.numel();
    return n;
  }
};

// ---------------------------------------------------------------------------
// initializers

inline Tensor xavier_init(long in, long out, Rng& rng) {
  Tensor t(in, out);
  real lim = std::sqrt(6.0 / real(in + out));
  for (auto& x : t.v) x = rng.uniform(-lim, lim);
  return t;
}

inline Tensor uniform_init(long r, long c, real lim, Rng& rng) {
  Tensor t(r, c);
  for (auto& x : t.v) x = rng.uniform(-lim, lim);
  return t;
}

inline Tensor normal_init(long r, long c, real std, Rng& rng) {
  Tensor t(r, c);
  for (auto& x : t.v) x = std * rng.normal();
  return t;
}

// ---------------------------------------------------------------------------
// layers

inline Var gelu(const Var& x) {
  Var x3 = mul(mul(x, x), x);
  Var t = tanh_op(mul_scalar(add(x, mul_scalar(x3, 0.044715)), 0.7978845608028654));
  return mul(mul_scalar(x, 0.5), add_scalar(t, 1.0));
}

struct Linear {
  Var w, b;  // x:(R,in) @ w:(in,out) + b:(1,out)

  static Linear create(ParamStore& ps, const std::string& prefix, long in, long out, Rng& rng) {
    Linear l;
    l.w = ps.add(prefix + ".w", xavier_init(in, out, rng));
    l.b = ps.add(prefix + ".b", Tensor(1, out));
    return l;
  }

  Var forward(const Var& x) const { return add_broadcast_row(matmul(x, w), b); }
};

struct LayerNorm {
  Var gamma, beta;

  static LayerNorm create(ParamStore& ps, const std::string& prefix, long dim) {
    LayerNorm ln;
    ln.gamma = ps.add(prefix + ".gamma", Tensor::full(1, dim, 1.0));
    ln.beta = ps.add(prefix + ".beta", Tensor(1, dim));
    return ln;
  }

  Var forward(const Var& x) const {
    return add_broadcast_row(mul_broadcast_row(layernorm_rows(x), gamma), beta);
  }
};

struct Attention {
  Linear q, k, v, o;
  long heads = 1;
  long dim = 0;

  static Attention create(ParamStore& ps, const std::string& prefix, long dim, long heads,
                          Rng& rng) {
    GS_CHECK(dim % heads == 0, "attention: dim must divide heads");
    Attention a;
    a.q = Linear::create(ps, prefix + ".q", dim, dim, rng);
    a.k = Linear::create(ps, prefix + ".k", dim, dim, rng);
    a.v = Linear::create(ps, prefix + ".v", dim, dim, rng);
    a.o = Linear::create(ps, prefix + ".o", dim, dim, rng);
    a.heads = heads;
    a.dim = dim;
    return a;
  }

  // queries:(Rq,C), keys_values:(Rk,C) -> (Rq,C)
  Var forward(const Var& queries, const Var& keys_values) const {
    Var Q = q.forward(queries), K = k.forward(keys_values), V = v.forward(keys_values);
    long dh = dim / heads;
    real scale = 1.0 / std::sqrt(real(dh));
    std::vector<Var> outs;
    outs.reserve(size_t(heads));
    for (long h = 0; h < heads; ++h) {
      Var Qh = slice_cols(Q, h * dh, (h + 1) * dh);
      Var Kh = slice_cols(K, h * dh, (h + 1) * dh);
      Var Vh = slice_cols(V, h * dh, (h + 1) * dh);
      Var A = softmax_rows(mul_scalar(matmul(Qh, Kh, false, true), scale));
      outs.push_back(matmul(A, Vh));
    }
    return o.forward(concat_cols(outs));
  }
};

struct Ffn {
  Linear fc1, fc2;

  static Ffn create(ParamStore& ps, const std::string& prefix, long dim, long hidden, Rng& rng) {
    Ffn f;
    f.fc1 = Linear::create(ps, prefix + ".fc1", dim, hidden, rng);
    f.fc2 = Linear::create(ps, prefix + ".fc2", hidden, dim, rng);
    return f;
  }

  Var forward(const Var& x) const { return fc2.forward(gelu(fc1.forward(x))); }
};

}  // namespace gsavatar
