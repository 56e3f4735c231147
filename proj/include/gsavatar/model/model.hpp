#pragma once

#include "gsavatar/backbone/backbone.hpp"
#include "gsavatar/decoders/face_decoder.hpp"
#include "gsavatar/decoders/hair_decoder.hpp"
#include "gsavatar/geometry/gaussians.hpp"
#include "gsavatar/objectives/losses.hpp"
#include "gsavatar/render/raster.hpp"
#include "gsavatar/tokenizers/encoders.hpp"

namespace gsavatar {

// Optional per-UV-pixel color override, composited after decoding and before
// mesh binding so it survives any expression or camera.
struct TextureEdit {
  Tensor color;  // (M,3) replacement colors for valid pixels
  Tensor mask;   // (M,1) blend weight in [0,1]
  bool active = false;
};

inline Var apply_texture_edit(const Var& decoded_color, const TextureEdit& edit) {
  if (!edit.active) return decoded_color;
  GS_CHECK(edit.color.rows() == decoded_color->val.rows() && edit.mask.rows() == edit.color.rows(),
           "texture edit: resolution mismatch");
  Tensor inv = edit.mask;
  for (auto& x : inv.v) x = 1.0 - x;
  Tensor add_part(edit.color.rows(), 3);
  for (long r = 0; r < edit.color.rows(); ++r)
    for (long c = 0; c < 3; ++c) add_part(r, c) = edit.mask(r, 0) * edit.color(r, c);
  return add(mul_broadcast_col(decoded_color, constant(std::move(inv))),
             constant(std::move(add_part)));
}

// Aggregated tokens for one identity, produced by a single encoder+backbone
// pass and sufficient to decode the avatar under any expression.
struct TokenState {
  Var t_head;     // (H_uv*W_uv, C) grid
  Var t_hair;     // (Hs*Ws, C) grid
  Var hair_base;  // (Hs*Ws, C) raw scalp features, last channel = density
  long frontal = 0;
};

struct AvatarGaussians {
  DecodedLocal face_local;
  GaussianVars face;
  HairBranchResult hair;

  GaussianSet combined() const {
    return concat_sets(face.plain(Semantic::Face), hair.gauss.plain(Semantic::Hair));
  }
};

struct AvatarModel {
  Config cfg;
  ParamStore params;
  TemplateMesh mesh;
  BindingTable head_bind, scalp_bind;
  real mean_edge = 0;
  TokenEncoders enc;
  Backbone backbone;
  FaceDecoder face_dec;
  HairDecoder hair_dec;
  SamplerConfig sampler;

  static AvatarModel create(const Config& cfg) {
    AvatarModel m;
    m.cfg = cfg;
    m.mesh = build_head_template(cfg.mesh_lat, cfg.mesh_lon, cfg.blend_count, cfg.seed);
    m.head_bind = uv_position_map(m.mesh, Region::Head, cfg.head_uv, cfg.head_uv);
    m.scalp_bind = uv_position_map(m.mesh, Region::Scalp, cfg.scalp_uv, cfg.scalp_uv);
    m.mean_edge = m.mesh.mean_edge_length();
    Rng rng(uint64_t(cfg.seed), 1);
    m.enc = TokenEncoders::create(m.params, cfg, rng);
    m.backbone = Backbone::create(m.params, cfg, rng);
    m.face_dec = FaceDecoder::create(m.params, "face", cfg, rng);
    m.hair_dec = HairDecoder::create(m.params, "hair", cfg, rng);
    m.sampler.t_short = cfg.t_short;
    m.sampler.t_long = cfg.t_long;
    m.sampler.len_gain = cfg.len_gain;
    m.sampler.seg_min = cfg.strand_min;
    m.sampler.seg_max = cfg.strand_sample_max;
    m.sampler.short_density_scale = cfg.short_density_scale;
    m.sampler.radius_gain = cfg.radius_gain;
    m.sampler.hair_len_scale = cfg.hair_len_scale;
    return m;
  }

  LossWeights loss_weights() const { return LossWeights::from_config(cfg, mean_edge); }

  // ---- encoding ----------------------------------------------------------

  std::vector<Var> image_tokens(const CaptureSet& caps) const {
    std::vector<Var> out;
    out.reserve(caps.size());
    for (const auto& f : caps) {
      GS_CHECK(f.image.W == cfg.img_size && f.image.H == cfg.img_size,
               "encode: image size mismatch");
      out.push_back(enc.image.forward(constant(image_to_chw(f.image)), cfg.img_size));
    }
    return out;
  }

  Tensor psi_matrix(const CaptureSet& caps) const {
    Tensor psi(long(caps.size()), cfg.blend_count);
    for (size_t f = 0; f < caps.size(); ++f) {
      GS_CHECK(caps[f].psi.numel() == cfg.blend_count, "encode: psi size mismatch");
      for (long c = 0; c < cfg.blend_count; ++c) psi(long(f), c) = caps[f].psi.v[size_t(c)];
    }
    return psi;
  }

  // One full encoder + backbone pass over a capture set.
  TokenState encode(const CaptureSet& caps) const {
    GS_CHECK(!caps.empty(), "encode: empty capture set");
    std::vector<Var> t_img = image_tokens(caps);
    Tensor psi = psi_matrix(caps);
    TokenState st;
    st.frontal = select_frontal(caps);
    st.t_head = enc.head.grid_tokens(head_bind, mesh.verts, mesh.faces);
    Var head_scalp = enc.head.grid_tokens(scalp_bind, mesh.verts, mesh.faces);
    st.hair_base = enc.hair_feat.forward(constant(image_to_chw(caps[size_t(st.frontal)].image)),
                                         cfg.img_size, cfg.scalp_uv, cfg.scalp_uv);
    st.t_hair = enc.hair_tok.forward(st.hair_base, t_img, head_scalp);
    backbone.run(st.t_head, st.t_hair, t_img, psi);
    return st;
  }

  // ---- decoding + posing --------------------------------------------------

  Tensor shaped_verts(const Tensor& shape_offsets) const {
    return apply_expression(mesh, shape_offsets, std::vector<real>(size_t(cfg.blend_count), 0.0));
  }

  AvatarGaussians decode(const TokenState& st, const Tensor& shape_offsets,
                         const std::vector<real>& psi, uint64_t sampler_seed,
                         const TextureEdit* face_edit = nullptr,
                         const TextureEdit* hair_edit = nullptr) const {
    Tensor verts_can = shaped_verts(shape_offsets);
    Tensor verts_posed = apply_expression(mesh, shape_offsets, psi);
    auto frames_can = triangle_frames(verts_can, mesh.faces);
    auto frames_posed = triangle_frames(verts_posed, mesh.faces);
    BoundFrames head_fr = gather_frames(head_bind, verts_posed, mesh.faces, frames_posed);
    BoundFrames scalp_can = gather_frames(scalp_bind, verts_can, mesh.faces, frames_can);
    BoundFrames scalp_posed = gather_frames(scalp_bind, verts_posed, mesh.faces, frames_posed);

    AvatarGaussians out;
    out.face_local = face_dec.decode(st.t_head, cfg.head_uv, cfg.head_uv, head_bind);
    if (face_edit) out.face_local.color = apply_texture_edit(out.face_local.color, *face_edit);
    out.face = face_branch(out.face_local, head_fr);

    if (cfg.hair_branch == 0) {
      out.hair.gauss.pos = constant(Tensor(0, 3));
      out.hair.gauss.scale = constant(Tensor(0, 3));
      out.hair.gauss.quat = constant(Tensor(0, 4));
      out.hair.gauss.opacity = constant(Tensor(0, 1));
      out.hair.gauss.color = constant(Tensor(0, 3));
      return out;
    }
    Var t_hair_valid = gather_rows(st.t_hair, scalp_bind.valid);
    Var hair_base_valid = gather_rows(st.hair_base, scalp_bind.valid);
    out.hair = hair_branch(hair_dec, t_hair_valid, hair_base_valid, scalp_bind, scalp_can,
                           scalp_posed, sampler, cfg.gamma_coeff, cfg.seg_radius, cfg.drop_eps,
                           sampler_seed);
    if (hair_edit && hair_edit->active) {
      // hair colors are per segment; expand the per-pixel edit along the
      // stored pixel-of-gaussian map
      long rows = out.hair.gauss.color->val.rows();
      TextureEdit seg_edit;
      seg_edit.active = true;
      seg_edit.color = Tensor(rows, 3);
      seg_edit.mask = Tensor(rows, 1);
      for (long r = 0; r < rows; ++r) {
        long m = out.hair.pixel_of_gaussian[size_t(r)];
        seg_edit.mask(r, 0) = hair_edit->mask(m, 0);
        for (long c = 0; c < 3; ++c) seg_edit.color(r, c) = hair_edit->color(m, c);
      }
      out.hair.gauss.color = apply_texture_edit(out.hair.gauss.color, seg_edit);
    }
    return out;
  }

  // ---- rendering ----------------------------------------------------------

  RasterParams raster_params(const Camera& cam, const std::vector<uint8_t>& semantic) const {
    RasterParams prm;
    prm.cam = cam;
    prm.bg = Vec3::Constant(cfg.bg_value);
    prm.semantic = semantic;
    prm.threads = raster_threads_from_env();
    return prm;
  }

  // full scene: channels [rgb | alpha | face cov | hair cov]
  Var render(const AvatarGaussians& g, const Camera& cam) const {
    long nf = g.face.count(), nh = g.hair.gauss.count();
    if (nh == 0) return render_face_only(g, cam);
    std::vector<uint8_t> sem(size_t(nf + nh), 0);
    std::fill(sem.begin() + nf, sem.end(), uint8_t(1));
    return rasterize(concat_rows({g.face.pos, g.hair.gauss.pos}),
                     concat_rows({g.face.scale, g.hair.gauss.scale}),
                     concat_rows({g.face.quat, g.hair.gauss.quat}),
                     concat_rows({g.face.opacity, g.hair.gauss.opacity}),
                     concat_rows({g.face.color, g.hair.gauss.color}), raster_params(cam, sem));
  }

  Var render_hair_only(const AvatarGaussians& g, const Camera& cam) const {
    std::vector<uint8_t> sem(size_t(g.hair.gauss.count()), 1);
    return rasterize(g.hair.gauss.pos, g.hair.gauss.scale, g.hair.gauss.quat,
                     g.hair.gauss.opacity, g.hair.gauss.color, raster_params(cam, sem));
  }

  Var render_face_only(const AvatarGaussians& g, const Camera& cam) const {
    std::vector<uint8_t> sem(size_t(g.face.count()), 0);
    return rasterize(g.face.pos, g.face.scale, g.face.quat, g.face.opacity, g.face.color,
                     raster_params(cam, sem));
  }

  // plain render of a fixed Gaussian set (dataset generation, viewers)
  Tensor render_set(const GaussianSet& g, const Camera& cam) const {
    RasterParams prm = raster_params(cam, g.semantic);
    return render_forward(g.pos, g.scale, g.quat, g.opacity, g.color, prm).img;
  }
};

// Rendered (H*W,6) rows -> RGB image.
inline ImageRGB frame_to_image(const Tensor& rows, long H, long W) {
  ImageRGB img(H, W);
  for (long i = 0; i < H * W; ++i)
    for (long c = 0; c < 3; ++c) img.px[size_t(i * 3 + c)] = rows(i, c);
  return img;
}

}  // namespace gsavatar
