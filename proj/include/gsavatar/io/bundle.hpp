#pragma once

#include "gsavatar/core/archive.hpp"
#include "gsavatar/model/model.hpp"

namespace gsavatar {

// Persistent identity unit: cached aggregated tokens, identity shape, the
// decoder weights that interpret the tokens, the sampler seed, and optional
// texture edits. Everything needed to re-render under any expression/camera
// without re-running the encoders or backbone.
struct AvatarBundle {
  Tensor shape_offsets;          // (V,3) identity vertex offsets
  Tensor t_head, t_hair, hair_base;
  long frontal = 0;
  uint64_t sampler_seed = 0;
  std::vector<std::pair<std::string, Tensor>> decoder_params;  // face.* / hair.*
  TextureEdit face_edit, hair_edit;
  uint64_t config_hash = 0;

  static uint64_t hash_config(const Config& cfg) {
    std::string s = cfg.to_json().dump();
    return fnv1a64(s.data(), s.size());
  }
};

// Snapshot the model's decoder weights into a bundle-owned copy.
inline std::vector<std::pair<std::string, Tensor>> snapshot_decoders(const AvatarModel& model) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, v] : model.params.items)
    if (name.rfind("face.", 0) == 0 || name.rfind("hair.", 0) == 0)
      out.push_back({name, v->val});
  return out;
}

// Write the bundle's decoder weights back into the model (shapes must match).
inline void install_decoders(AvatarModel& model, const AvatarBundle& b) {
  for (const auto& [name, t] : b.decoder_params) {
    Var v = model.params.at(name);
    GS_CHECK(v->val.rows() == t.rows() && v->val.cols() == t.cols(),
             "bundle: decoder weight shape mismatch for " + name);
    v->val = t;
  }
}

inline void save_bundle(const AvatarBundle& b, const std::string& path) {
  Archive ar;
  ar.meta["kind"] = "gsavatar-bundle";
  ar.meta["version"] = 1;
  ar.meta["frontal"] = b.frontal;
  ar.meta["sampler_seed"] = b.sampler_seed;
  ar.meta["config_hash"] = b.config_hash;
  ar.add_tensor("shape_offsets", b.shape_offsets);
  ar.add_tensor("t_head", b.t_head);
  ar.add_tensor("t_hair", b.t_hair);
  ar.add_tensor("hair_base", b.hair_base);
  std::vector<std::string> names;
  for (const auto& [name, t] : b.decoder_params) {
    ar.add_tensor("param/" + name, t);
    names.push_back(name);
  }
  ar.meta["decoder_params"] = names;
  ar.meta["face_edit"] = b.face_edit.active;
  ar.meta["hair_edit"] = b.hair_edit.active;
  if (b.face_edit.active) {
    ar.add_tensor("face_edit/color", b.face_edit.color);
    ar.add_tensor("face_edit/mask", b.face_edit.mask);
  }
  if (b.hair_edit.active) {
    ar.add_tensor("hair_edit/color", b.hair_edit.color);
    ar.add_tensor("hair_edit/mask", b.hair_edit.mask);
  }
  ar.save(path);
}

inline AvatarBundle load_bundle(const std::string& path, const Config& cfg) {
  Archive ar = Archive::load(path);
  GS_CHECK(ar.meta.value("kind", "") == "gsavatar-bundle", "bundle: wrong archive kind");
  AvatarBundle b;
  b.config_hash = ar.meta.value("config_hash", uint64_t(0));
  GS_CHECK(b.config_hash == AvatarBundle::hash_config(cfg),
           "bundle: config hash mismatch (bundle built with different settings)");
  b.frontal = ar.meta.value("frontal", 0L);
  b.sampler_seed = ar.meta.value("sampler_seed", uint64_t(0));
  b.shape_offsets = ar.get_tensor("shape_offsets");
  b.t_head = ar.get_tensor("t_head");
  b.t_hair = ar.get_tensor("t_hair");
  b.hair_base = ar.get_tensor("hair_base");
  for (const auto& name : ar.meta.value("decoder_params", std::vector<std::string>{}))
    b.decoder_params.push_back({name, ar.get_tensor("param/" + name)});
  if (ar.meta.value("face_edit", false)) {
    b.face_edit.active = true;
    b.face_edit.color = ar.get_tensor("face_edit/color");
    b.face_edit.mask = ar.get_tensor("face_edit/mask");
  }
  if (ar.meta.value("hair_edit", false)) {
    b.hair_edit.active = true;
    b.hair_edit.color = ar.get_tensor("hair_edit/color");
    b.hair_edit.mask = ar.get_tensor("hair_edit/mask");
  }
  return b;
}

// Decode the bundle to world Gaussians under the given expression. Installs
// the bundle's decoder weights into the model first.
inline AvatarGaussians decode_bundle(AvatarModel& model, const AvatarBundle& b,
                                     const std::vector<real>& psi) {
  install_decoders(model, b);
  TokenState st;
  st.t_head = constant(b.t_head);
  st.t_hair = constant(b.t_hair);
  st.hair_base = constant(b.hair_base);
  st.frontal = b.frontal;
  return model.decode(st, b.shape_offsets, psi, b.sampler_seed,
                      b.face_edit.active ? &b.face_edit : nullptr,
                      b.hair_edit.active ? &b.hair_edit : nullptr);
}

// Face branch (tokens, face decoder weights, identity shape, face edits) from
// A; hair branch (tokens, raw scalp features, hair decoder weights, sampler
// seed, hair edits) from B. Strand roots follow A's scalp automatically when
// the composed bundle is decoded on A's shaped mesh.
inline AvatarBundle transfer_hair(const AvatarBundle& a, const AvatarBundle& b) {
  GS_CHECK(a.config_hash == b.config_hash, "transfer: avatar topology/config mismatch");
  GS_CHECK(a.t_hair.rows() == b.t_hair.rows() && a.t_hair.cols() == b.t_hair.cols(),
           "transfer: scalp layout mismatch");
  AvatarBundle out;
  out.config_hash = a.config_hash;
  out.shape_offsets = a.shape_offsets;
  out.t_head = a.t_head;
  out.frontal = a.frontal;
  out.face_edit = a.face_edit;
  out.t_hair = b.t_hair;
  out.hair_base = b.hair_base;
  out.sampler_seed = b.sampler_seed;
  out.hair_edit = b.hair_edit;
  for (const auto& [name, t] : a.decoder_params)
    if (name.rfind("face.", 0) == 0) out.decoder_params.push_back({name, t});
  for (const auto& [name, t] : b.decoder_params)
    if (name.rfind("hair.", 0) == 0) out.decoder_params.push_back({name, t});
  return out;
}

// Attach a UV-space color edit for the given region. Overlay and mask are
// full UV grids; they are sampled at the region's valid pixels.
inline AvatarBundle edit_texture(const AvatarBundle& bundle, const AvatarModel& model,
                                 const ImageRGB& overlay, const ImageGray& mask, Region region) {
  const BindingTable& bind = region == Region::Head ? model.head_bind : model.scalp_bind;
  GS_CHECK(overlay.W == bind.W && overlay.H == bind.H,
           "edit_texture: overlay resolution mismatch");
  GS_CHECK(mask.W == bind.W && mask.H == bind.H, "edit_texture: mask resolution mismatch");
  TextureEdit edit;
  edit.active = true;
  long M = bind.valid_count();
  edit.color = Tensor(M, 3);
  edit.mask = Tensor(M, 1);
  for (long m = 0; m < M; ++m) {
    long px = bind.valid[size_t(m)];
    for (long c = 0; c < 3; ++c) edit.color(m, c) = overlay.px[size_t(px * 3 + c)];
    edit.mask(m, 0) = mask.px[size_t(px)];
  }
  AvatarBundle out = bundle;
  (region == Region::Head ? out.face_edit : out.hair_edit) = edit;
  return out;
}

}  // namespace gsavatar
