#pragma once

#include "gsavatar/config.hpp"
#include "gsavatar/core/image_io.hpp"
#include "gsavatar/core/nn.hpp"
#include "gsavatar/core/ops_image.hpp"
#include "gsavatar/geometry/uv.hpp"
#include "gsavatar/render/camera.hpp"

namespace gsavatar {

// One captured frame: image, camera, expression parameters and supervision
// masks (empty when unused).
struct CaptureFrame {
  ImageRGB image;
  Camera cam;
  Tensor psi;  // (1, E) expression parameters
  ImageGray hair_mask;
  ImageGray face_mask;
};

using CaptureSet = std::vector<CaptureFrame>;

// Fourier features: [x | sin(2^l*pi*x), cos(2^l*pi*x) for l = 0..L-1].
inline Tensor positional_encoding(const Tensor& x, long bands) {
  GS_CHECK(bands >= 1, "positional_encoding: need at least one band");
  long K = x.rows(), D = x.cols();
  Tensor out(K, D + 2 * D * bands);
  for (long r = 0; r < K; ++r) {
    for (long d = 0; d < D; ++d) out(r, d) = x(r, d);
    for (long l = 0; l < bands; ++l) {
      real f = std::ldexp(kPi, int(l));  // 2^l * pi
      for (long d = 0; d < D; ++d) {
        out(r, D + 2 * D * l + d) = std::sin(f * x(r, d));
        out(r, D + 2 * D * l + D + d) = std::cos(f * x(r, d));
      }
    }
  }
  return out;
}

// Picks the frame whose optical axis best faces the template's +z face
// direction; ties resolve to the lowest index.
inline long select_frontal(const CaptureSet& captures) {
  GS_CHECK(!captures.empty(), "select_frontal: empty capture set");
  long best = 0;
  real best_score = -2;
  for (size_t i = 0; i < captures.size(); ++i) {
    Vec3 fwd = captures[i].cam.forward_world();
    real score = -fwd.z();  // camera in front looks along -z
    if (score > best_score + 1e-12) {
      best_score = score;
      best = long(i);
    }
  }
  return best;
}

// Multi-scale convolutional patch encoder; downsamples by 16 through four
// stride-2 convs and fuses the /8 features back into the /16 output.
struct ImageEncoder {
  Var w1, b1, w2, b2, w3, b3, w4, b4, wf, bf;
  long f = 0, dim = 0;

  static ImageEncoder create(ParamStore& ps, const std::string& prefix, long dim, Rng& rng) {
    ImageEncoder e;
    e.dim = dim;
    e.f = std::max<long>(8, dim / 8);
    long f = e.f;
    e.w1 = ps.add(prefix + ".c1.w", xavier_init(f, 3 * 9, rng));
    e.b1 = ps.add(prefix + ".c1.b", Tensor(1, f));
    e.w2 = ps.add(prefix + ".c2.w", xavier_init(2 * f, f * 9, rng));
    e.b2 = ps.add(prefix + ".c2.b", Tensor(1, 2 * f));
    e.w3 = ps.add(prefix + ".c3.w", xavier_init(4 * f, 2 * f * 9, rng));
    e.b3 = ps.add(prefix + ".c3.b", Tensor(1, 4 * f));
    e.w4 = ps.add(prefix + ".c4.w", xavier_init(dim, 4 * f * 9, rng));
    e.b4 = ps.add(prefix + ".c4.b", Tensor(1, dim));
    e.wf = ps.add(prefix + ".fuse.w", xavier_init(dim, 4 * f, rng));
    e.bf = ps.add(prefix + ".fuse.b", Tensor(1, dim));
    return e;
  }

  // img: (3, side*side) -> tokens (P, dim) with P = (side/16)^2
  Var forward(const Var& img, long side) const {
    GS_CHECK(side % 16 == 0, "image encoder: side must be divisible by 16");
    long s2 = side / 2, s4 = side / 4, s8 = side / 8, s16 = side / 16;
    Var h1 = gelu(conv2d(img, w1, b1, side, side, 3, 2, 1));
    Var h2 = gelu(conv2d(h1, w2, b2, s2, s2, 3, 2, 1));
    Var h3 = gelu(conv2d(h2, w3, b3, s4, s4, 3, 2, 1));  // depth /8
    Var h4 = conv2d(h3, w4, b4, s8, s8, 3, 2, 1);        // depth /16
    Var skip = conv2d(avg_pool_to(h3, s8, s8, s16, s16), wf, bf, s16, s16, 1, 1, 0);
    return transpose(add(h4, skip));
  }
};

// Pointwise MLP over positional-encoded canonical positions; invalid UV
// pixels receive a shared learned null token.
struct HeadTokenEncoder {
  Linear fc1, fc2, fc3;
  Var null_token;
  long bands = 6;

  static HeadTokenEncoder create(ParamStore& ps, const std::string& prefix, long dim, long bands,
                                 Rng& rng) {
    HeadTokenEncoder e;
    e.bands = bands;
    long in = 3 + 6 * bands;
    e.fc1 = Linear::create(ps, prefix + ".fc1", in, dim, rng);
    e.fc2 = Linear::create(ps, prefix + ".fc2", dim, dim, rng);
    e.fc3 = Linear::create(ps, prefix + ".fc3", dim, dim, rng);
    e.null_token = ps.add(prefix + ".null", normal_init(1, dim, 0.02, rng));
    return e;
  }

  // Tokens for explicit positions (one row per position).
  Var tokens_for(const Tensor& positions) const {
    Var enc = constant(positional_encoding(positions, bands));
    return fc3.forward(gelu(fc2.forward(gelu(fc1.forward(enc)))));
  }

  // Full-grid tokens: valid pixels through the MLP, the rest the null token.
  Var grid_tokens(const BindingTable& bind, const Tensor& canonical_verts,
                  const std::vector<std::array<long, 3>>& faces) const {
    Tensor pos = bind.anchors(canonical_verts, faces);
    Var valid_tokens = tokens_for(pos);
    Var rows = concat_rows({valid_tokens, null_token});
    long null_row = valid_tokens->val.rows();
    std::vector<long> idx(size_t(bind.pixel_count()), null_row);
    for (long m = 0; m < bind.valid_count(); ++m) idx[size_t(bind.valid[size_t(m)])] = m;
    return gather_rows(rows, std::move(idx));
  }
};

// Convolutional scalp-feature extractor for the frontal frame; the last
// output channel doubles as a coarse strand density map.
struct HairFeatureEncoder {
  Var w1, b1, w2, b2;
  long ch = 0;

  static HairFeatureEncoder create(ParamStore& ps, const std::string& prefix, long c_hair,
                                   Rng& rng) {
    HairFeatureEncoder e;
    e.ch = c_hair;
    e.w1 = ps.add(prefix + ".c1.w", xavier_init(8, 3 * 9, rng));
    e.b1 = ps.add(prefix + ".c1.b", Tensor(1, 8));
    e.w2 = ps.add(prefix + ".c2.w", xavier_init(c_hair, 8 * 9, rng));
    Tensor b2init(1, c_hair);
    b2init(0, c_hair - 1) = 1.0;  // density channel starts positive
    e.b2 = ps.add(prefix + ".c2.b", std::move(b2init));
    return e;
  }

  // img: (3, side*side) -> hair_base (Hs*Ws, ch)
  Var forward(const Var& img, long side, long Hs, long Ws) const {
    long s2 = side / 2, s4 = side / 4;
    Var h1 = gelu(conv2d(img, w1, b1, side, side, 3, 2, 1));
    Var h2 = conv2d(h1, w2, b2, s2, s2, 3, 2, 1);
    return transpose(avg_pool_to(h2, s4, s4, Hs, Ws));
  }
};

// Scalp-pixel queries attend the concatenated image tokens; the scalp-gridded
// head tokens enter as a residual, so zero output weights give exactly them.
struct HairTokenEncoder {
  Linear q_in;
  LayerNorm ln_q, ln_kv;
  Attention cross;

  static HairTokenEncoder create(ParamStore& ps, const std::string& prefix, long c_hair, long dim,
                                 long heads, Rng& rng) {
    HairTokenEncoder e;
    e.q_in = Linear::create(ps, prefix + ".q_in", c_hair, dim, rng);
    e.ln_q = LayerNorm::create(ps, prefix + ".ln_q", dim);
    e.ln_kv = LayerNorm::create(ps, prefix + ".ln_kv", dim);
    e.cross = Attention::create(ps, prefix + ".cross", dim, heads, rng);
    return e;
  }

  Var forward(const Var& hair_base, const std::vector<Var>& image_tokens,
              const Var& head_scalp) const {
    GS_CHECK(!image_tokens.empty(), "hair tokens: no image tokens");
    Var kv = image_tokens.size() == 1 ? image_tokens[0] : concat_rows(image_tokens);
    Var q = ln_q.forward(q_in.forward(hair_base));
    return add(head_scalp, cross.forward(q, ln_kv.forward(kv)));
  }
};

struct TokenEncoders {
  ImageEncoder image;
  HeadTokenEncoder head;
  HairFeatureEncoder hair_feat;
  HairTokenEncoder hair_tok;

  static TokenEncoders create(ParamStore& ps, const Config& cfg, Rng& rng) {
    TokenEncoders t;
    t.image = ImageEncoder::create(ps, "enc.img", cfg.embed_dim, rng);
    t.head = HeadTokenEncoder::create(ps, "enc.head", cfg.embed_dim, cfg.pe_bands, rng);
    t.hair_feat = HairFeatureEncoder::create(ps, "enc.hairf", cfg.embed_dim, rng);
    t.hair_tok = HairTokenEncoder::create(ps, "enc.hairx", cfg.embed_dim, cfg.embed_dim,
                                          cfg.cross_heads, rng);
    return t;
  }
};

}  // namespace gsavatar
