#pragma once

#include "gsavatar/config.hpp"
#include "gsavatar/core/nn.hpp"

namespace gsavatar {

// One transformer block of the token aggregator. Head and hair tokens each
// cross-attend the concatenation of every frame's image tokens (keys/values
// conditioned on that frame's expression via a channel projection); image
// tokens then run frame-wise self-attention twice, once serving each query
// path. Odd-indexed blocks use a single self-attention weight set for both
// passes, even-indexed blocks keep separate sets.
struct AggregatedBlock {
  Linear psi_proj;
  LayerNorm ln_head_q, ln_head_kv, ln_head_ffn;
  Attention head_cross;
  Ffn head_ffn;
  LayerNorm ln_hair_q, ln_hair_kv, ln_hair_ffn;
  Attention hair_cross;
  Ffn hair_ffn;
  LayerNorm ln_self1, ln_self1_ffn, ln_self2, ln_self2_ffn;
  Attention self1, self2;  // self2 aliases self1's weights in shared blocks
  Ffn self1_ffn, self2_ffn;
  bool shared_self = false;

  static AggregatedBlock create(ParamStore& ps, const std::string& prefix, long dim,
                                long self_heads, long cross_heads, long psi_dim, bool shared,
                                Rng& rng) {
    AggregatedBlock b;
    b.shared_self = shared;
    b.psi_proj = Linear::create(ps, prefix + ".psi", psi_dim, dim, rng);
    b.ln_head_q = LayerNorm::create(ps, prefix + ".head.ln_q", dim);
    b.ln_head_kv = LayerNorm::create(ps, prefix + ".head.ln_kv", dim);
    b.head_cross = Attention::create(ps, prefix + ".head.cross", dim, cross_heads, rng);
    b.ln_head_ffn = LayerNorm::create(ps, prefix + ".head.ln_ffn", dim);
    b.head_ffn = Ffn::create(ps, prefix + ".head.ffn", dim, 4 * dim, rng);
    b.ln_hair_q = LayerNorm::create(ps, prefix + ".hair.ln_q", dim);
    b.ln_hair_kv = LayerNorm::create(ps, prefix + ".hair.ln_kv", dim);
    b.hair_cross = Attention::create(ps, prefix + ".hair.cross", dim, cross_heads, rng);
    b.ln_hair_ffn = LayerNorm::create(ps, prefix + ".hair.ln_ffn", dim);
    b.hair_ffn = Ffn::create(ps, prefix + ".hair.ffn", dim, 4 * dim, rng);
    b.ln_self1 = LayerNorm::create(ps, prefix + ".self1.ln", dim);
    b.self1 = Attention::create(ps, prefix + ".self1.attn", dim, self_heads, rng);
    b.ln_self1_ffn = LayerNorm::create(ps, prefix + ".self1.ln_ffn", dim);
    b.self1_ffn = Ffn::create(ps, prefix + ".self1.ffn", dim, 4 * dim, rng);
    if (shared) {
      b.ln_self2 = b.ln_self1;
      b.self2 = b.self1;
    } else {
      b.ln_self2 = LayerNorm::create(ps, prefix + ".self2.ln", dim);
      b.self2 = Attention::create(ps, prefix + ".self2.attn", dim, self_heads, rng);
    }
    b.ln_self2_ffn = LayerNorm::create(ps, prefix + ".self2.ln_ffn", dim);
    b.self2_ffn = Ffn::create(ps, prefix + ".self2.ffn", dim, 4 * dim, rng);
    return b;
  }

  void forward(Var& t_head, Var& t_hair, std::vector<Var>& t_image, const Tensor& psi) const {
    GS_CHECK(long(t_image.size()) == psi.rows(), "block: psi row per frame required");
    // expression-conditioned keys/values, all frames concatenated
    std::vector<Var> kv_parts;
    kv_parts.reserve(t_image.size());
    for (size_t f = 0; f < t_image.size(); ++f) {
      Tensor prow(1, psi.cols());
      for (long c = 0; c < psi.cols(); ++c) prow(0, c) = psi(long(f), c);
      kv_parts.push_back(add_broadcast_row(t_image[f], psi_proj.forward(constant(prow))));
    }
    Var kv = kv_parts.size() == 1 ? kv_parts[0] : concat_rows(kv_parts);

    t_head = add(t_head, head_cross.forward(ln_head_q.forward(t_head), ln_head_kv.forward(kv)));
    t_head = add(t_head, head_ffn.forward(ln_head_ffn.forward(t_head)));
    t_hair = add(t_hair, hair_cross.forward(ln_hair_q.forward(t_hair), ln_hair_kv.forward(kv)));
    t_hair = add(t_hair, hair_ffn.forward(ln_hair_ffn.forward(t_hair)));

    for (auto& ti : t_image) {
      Var n1 = ln_self1.forward(ti);
      ti = add(ti, self1.forward(n1, n1));
      ti = add(ti, self1_ffn.forward(ln_self1_ffn.forward(ti)));
      Var n2 = ln_self2.forward(ti);
      ti = add(ti, self2.forward(n2, n2));
      ti = add(ti, self2_ffn.forward(ln_self2_ffn.forward(ti)));
    }
  }
};

struct Backbone {
  std::vector<AggregatedBlock> blocks;

  static Backbone create(ParamStore& ps, const Config& cfg, Rng& rng) {
    Backbone bb;
    for (long b = 0; b < cfg.blocks; ++b)
      bb.blocks.push_back(AggregatedBlock::create(ps, "backbone.b" + std::to_string(b),
                                                  cfg.embed_dim, cfg.self_heads, cfg.cross_heads,
                                                  cfg.blend_count, b % 2 == 1, rng));
    return bb;
  }

  long shared_block_count() const {
    long n = 0;
    for (const auto& b : blocks) n += b.shared_self ? 1 : 0;
    return n;
  }

  // psi: (N, E) one row per frame. Tokens are updated in place and returned.
  void run(Var& t_head, Var& t_hair, std::vector<Var>& t_image, const Tensor& psi) const {
    for (const auto& b : blocks) b.forward(t_head, t_hair, t_image, psi);
  }
};

}  // namespace gsavatar
