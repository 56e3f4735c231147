#pragma once

#include <filesystem>

#include "gsavatar/io/bundle.hpp"
#include "gsavatar/model/model.hpp"

namespace gsavatar {

// Procedural ground-truth identities: a textured face Gaussian layer bound to
// the template plus parametric hair strands (length class, curl, color), all
// rendered from a ring of cameras per expression. Everything is deterministic
// per seed; exact float renders and the GT Gaussians themselves are archived
// so tests can round-trip the renderer bit-for-bit.

struct HairStyle {
  real total_len = 0.76;  // summed segment length per strand
  real curl_amp = 0.3;
  real curl_freq = 2.0;
  Vec3 color = Vec3(0.22, 0.15, 0.10);
  real alpha = 0.88;
  real radius = 0.01;
  long segments = 24;
};

struct GtIdentity {
  Tensor shape_offsets;      // (V,3)
  LocalGaussians face_local; // canonical per-head-pixel attributes
  Tensor roots, dirs;        // (M,3), (M*S,3) canonical strands
  HairStyle style;
};

// style classes cycle long / short / medium so identity 0 is long-haired
inline HairStyle hair_style_for(long id, Rng& rng) {
  HairStyle s;
  long cls = id % 3;
  s.total_len = cls == 0 ? 0.76 : (cls == 1 ? 0.40 : 0.67);
  s.curl_amp = 0.15 + 0.3 * rng.uniform();
  s.curl_freq = 1.0 + 2.0 * rng.uniform();
  const Vec3 palette[3] = {Vec3(0.24, 0.16, 0.10), Vec3(0.08, 0.07, 0.07),
                           Vec3(0.82, 0.68, 0.42)};
  s.color = palette[id % 3] + Vec3::Constant(0.04 * (rng.uniform() - 0.5));
  for (int c = 0; c < 3; ++c) s.color[c] = std::clamp(s.color[c], 0.02, 0.95);
  return s;
}

inline Tensor make_shape_offsets(const TemplateMesh& mesh, Rng& rng) {
  long V = mesh.vert_count();
  Tensor off(V, 3);
  for (int lobe = 0; lobe < 3; ++lobe) {
    Vec3 dir = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    Vec3 disp = 0.03 * Vec3(rng.normal(), rng.normal(), rng.normal());
    real width = 0.35 + 0.3 * rng.uniform();
    for (long v = 0; v < V; ++v) {
      Vec3 p(mesh.verts(v, 0), mesh.verts(v, 1), mesh.verts(v, 2));
      real w = std::exp(-(p.normalized() - dir).squaredNorm() / (2 * width * width));
      for (int c = 0; c < 3; ++c) off(v, c) += w * disp[c];
    }
  }
  return off;
}

inline GtIdentity make_gt_identity(const AvatarModel& model, long id, uint64_t seed) {
  Rng rng(seed, 1000 + uint64_t(id));
  GtIdentity gt;
  gt.style = hair_style_for(id, rng);
  gt.shape_offsets = make_shape_offsets(model.mesh, rng);
  Tensor shaped = model.shaped_verts(gt.shape_offsets);

  // face layer: planar Gaussians on the texture, no local offset
  const BindingTable& hb = model.head_bind;
  long M = hb.valid_count();
  Tensor anchors = hb.anchors(shaped, model.mesh.faces);
  gt.face_local.dpos = Tensor(M, 3);
  gt.face_local.sigma = Tensor(M, 3);
  gt.face_local.quat = Tensor(M, 4);
  gt.face_local.opacity = Tensor(M, 1);
  gt.face_local.color = Tensor(M, 3);
  Vec3 tone(0.72 + 0.1 * rng.uniform(), 0.55 + 0.1 * rng.uniform(), 0.44 + 0.1 * rng.uniform());
  real ph1 = rng.uniform(0, 2 * kPi), ph2 = rng.uniform(0, 2 * kPi);
  for (long m = 0; m < M; ++m) {
    Vec3 p(anchors(m, 0), anchors(m, 1), anchors(m, 2));
    real shade = 0.86 + 0.14 * std::sin(3.1 * p.x() + ph1) * std::sin(2.3 * p.y() + ph2);
    // darker band near the mouth, warmer near the cheeks
    real lip = std::exp(-((p.y() + 0.42) * (p.y() + 0.42) + p.x() * p.x() * 0.5) * 28.0) *
               std::max(real(0), p.z());
    for (int c = 0; c < 3; ++c) {
      real base = tone[c] * shade - lip * (c == 0 ? 0.12 : 0.30);
      gt.face_local.color(m, c) = std::clamp(base, 0.03, 0.97);
    }
    gt.face_local.sigma(m, 0) = 0.40;
    gt.face_local.sigma(m, 1) = 0.40;
    gt.face_local.sigma(m, 2) = 0.06;
    gt.face_local.quat(m, 0) = 1.0;
    gt.face_local.opacity(m, 0) = 0.92;
  }

  // strands: constant segment length, root-normal start bending toward
  // gravity, sinusoidal curl in the orthogonal plane
  const BindingTable& sb = model.scalp_bind;
  long N = sb.valid_count();
  long S = gt.style.segments;
  gt.roots = sb.anchors(shaped, model.mesh.faces);
  gt.dirs = Tensor(N * S, 3);
  real seg_len = gt.style.total_len / real(S);
  for (long i = 0; i < N; ++i) {
    Vec3 root(gt.roots(i, 0), gt.roots(i, 1), gt.roots(i, 2));
    Vec3 n = root.normalized();
    real phase = rng.uniform(0, 2 * kPi);
    for (long s = 0; s < S; ++s) {
      real t = real(s) / real(std::max<long>(1, S - 1));
      Vec3 base = ((1.0 - 0.8 * t) * n + 0.8 * t * Vec3(0, -1, 0)).normalized();
      Vec3 t1 = base.cross(Vec3(0, 1, 0));
      if (t1.norm() < 1e-6) t1 = base.cross(Vec3(1, 0, 0));
      t1.normalize();
      Vec3 t2 = base.cross(t1).normalized();
      real a = gt.style.curl_amp;
      real w = 2 * kPi * gt.style.curl_freq * t + phase;
      Vec3 d = (base + a * (std::sin(w) * t1 + std::cos(w) * t2)).normalized() * seg_len;
      for (int c = 0; c < 3; ++c) gt.dirs(i * S + s, c) = d[c];
    }
  }
  return gt;
}

// Rigid root-follow posing of the canonical strands (plain mirror of the
// decoder's behaviour).
inline std::pair<Tensor, Tensor> pose_gt_strands(const GtIdentity& gt, const AvatarModel& model,
                                                 const std::vector<real>& psi) {
  Tensor verts_can = model.shaped_verts(gt.shape_offsets);
  Tensor verts_posed = apply_expression(model.mesh, gt.shape_offsets, psi);
  auto fr_can = triangle_frames(verts_can, model.mesh.faces);
  auto fr_posed = triangle_frames(verts_posed, model.mesh.faces);
  const BindingTable& sb = model.scalp_bind;
  Tensor roots = sb.anchors(verts_posed, model.mesh.faces);
  long S = gt.style.segments;
  Tensor dirs = gt.dirs;
  for (long i = 0; i < sb.valid_count(); ++i) {
    long f = sb.face[size_t(sb.valid[size_t(i)])];
    Mat3 rel = fr_posed[size_t(f)].rot * fr_can[size_t(f)].rot.transpose();
    for (long s = 0; s < S; ++s) {
      Vec3 d(gt.dirs(i * S + s, 0), gt.dirs(i * S + s, 1), gt.dirs(i * S + s, 2));
      Vec3 r = rel * d;
      for (int c = 0; c < 3; ++c) dirs(i * S + s, c) = r[c];
    }
  }
  return {std::move(roots), std::move(dirs)};
}

inline GaussianSet gt_world_set(const GtIdentity& gt, const AvatarModel& model,
                                const std::vector<real>& psi) {
  Tensor verts_posed = apply_expression(model.mesh, gt.shape_offsets, psi);
  auto frames = triangle_frames(verts_posed, model.mesh.faces);
  BoundFrames head_fr = gather_frames(model.head_bind, verts_posed, model.mesh.faces, frames);
  GaussianSet face = bind_and_pose(gt.face_local, head_fr, Semantic::Face);

  auto [roots, dirs] = pose_gt_strands(gt, model, psi);
  StrandGaussiansPlain sg =
      strand_gaussians_plain(roots, dirs, gt.style.segments, gt.style.radius);
  GaussianSet hair;
  long n = sg.pos.rows();
  hair.pos = sg.pos;
  hair.scale = sg.scale;
  hair.quat = sg.quat;
  hair.opacity = Tensor(n, 1);
  hair.color = Tensor(n, 3);
  for (long i = 0; i < n; ++i) {
    hair.opacity(i, 0) = gt.style.alpha;
    for (int c = 0; c < 3; ++c) hair.color(i, c) = gt.style.color[c];
  }
  hair.semantic.assign(size_t(n), uint8_t(Semantic::Hair));
  return concat_sets(face, hair);
}

// ---------------------------------------------------------------------------
// on-disk layout

struct FrameRef {
  std::string image, hair_mask, face_mask;
  long view = 0, expr = 0;
  bool eval = false;
  Vec3 eye;
  real fov = 0.45;
};

struct IdentityData {
  std::string dir;
  std::vector<FrameRef> frames;
  std::vector<std::vector<real>> expressions;
  Tensor shape_offsets;
};

inline Camera frame_camera(const FrameRef& fr, long img_size) {
  return Camera::look_at(fr.eye, Vec3::Zero(), Vec3(0, 1, 0), fr.fov, img_size, img_size);
}

inline std::vector<real> make_expression(long e, long blend_count, Rng& rng) {
  std::vector<real> psi(size_t(blend_count), 0.0);
  if (e == 0) return psi;  // neutral
  psi[0] = 0.45 + 0.2 * rng.uniform();
  for (size_t j = 1; j < psi.size(); ++j) psi[j] = 0.15 * rng.normal();
  return psi;
}

inline Vec3 ring_eye(real angle) { return Vec3(3.0 * std::sin(angle), 0.15, 3.0 * std::cos(angle)); }

inline void generate_identity(const AvatarModel& model, long id, const std::string& dir,
                              uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/frames");
  fs::create_directories(dir + "/masks");
  const Config& cfg = model.cfg;
  GtIdentity gt = make_gt_identity(model, id, seed);
  Rng erng(seed, 2000 + uint64_t(id));

  Archive gta;
  gta.meta["kind"] = "gsavatar-gt";
  gta.meta["identity"] = id;
  gta.meta["hair_len"] = gt.style.total_len;
  gta.meta["hair_segments"] = gt.style.segments;
  gta.add_tensor("shape_offsets", gt.shape_offsets);
  gta.add_tensor("face/dpos", gt.face_local.dpos);
  gta.add_tensor("face/sigma", gt.face_local.sigma);
  gta.add_tensor("face/quat", gt.face_local.quat);
  gta.add_tensor("face/opacity", gt.face_local.opacity);
  gta.add_tensor("face/color", gt.face_local.color);
  gta.add_tensor("hair/roots", gt.roots);
  gta.add_tensor("hair/dirs", gt.dirs);

  nlohmann::json man;
  man["identity"] = id;
  man["img_size"] = cfg.img_size;
  man["expressions"] = nlohmann::json::array();
  man["frames"] = nlohmann::json::array();

  for (long e = 0; e < cfg.data_expressions; ++e) {
    std::vector<real> psi = make_expression(e, cfg.blend_count, erng);
    man["expressions"].push_back(psi);
    GaussianSet world = gt_world_set(gt, model, psi);
    std::string ek = "expr" + std::to_string(e);
    gta.add_tensor(ek + "/pos", world.pos);
    gta.add_tensor(ek + "/scale", world.scale);
    gta.add_tensor(ek + "/quat", world.quat);
    gta.add_tensor(ek + "/opacity", world.opacity);
    gta.add_tensor(ek + "/color", world.color);
    gta.add_u8(ek + "/semantic", world.semantic, {long(world.semantic.size())});

    long total_views = cfg.data_views + cfg.data_eval_views;
    for (long v = 0; v < total_views; ++v) {
      bool is_eval = v >= cfg.data_views;
      real angle = is_eval ? 2 * kPi * (real(v - cfg.data_views) + 0.5) / real(cfg.data_views)
                           : 2 * kPi * real(v) / real(cfg.data_views);
      FrameRef fr;
      fr.view = v;
      fr.expr = e;
      fr.eval = is_eval;
      fr.eye = ring_eye(angle);
      Camera cam = frame_camera(fr, cfg.img_size);
      Tensor rows = model.render_set(world, cam);
      long HW = cfg.img_size * cfg.img_size;
      ImageRGB img(cfg.img_size, cfg.img_size);
      ImageGray hmask(cfg.img_size, cfg.img_size), fmask(cfg.img_size, cfg.img_size);
      for (long i = 0; i < HW; ++i) {
        for (long c = 0; c < 3; ++c) img.px[size_t(i * 3 + c)] = rows(i, c);
        fmask.px[size_t(i)] = rows(i, 4) > 0.5 ? 1.0 : 0.0;
        hmask.px[size_t(i)] = rows(i, 5) > 0.5 ? 1.0 : 0.0;
      }
      std::string tag = "e" + std::to_string(e) + "_v" + std::to_string(v);
      fr.image = "frames/" + tag + ".png";
      fr.hair_mask = "masks/" + tag + "_hair.png";
      fr.face_mask = "masks/" + tag + "_face.png";
      write_png_rgb(dir + "/" + fr.image, img);
      write_png_gray(dir + "/" + fr.hair_mask, hmask);
      write_png_gray(dir + "/" + fr.face_mask, fmask);
      Tensor rgb(HW, 3);
      for (long i = 0; i < HW; ++i)
        for (long c = 0; c < 3; ++c) rgb(i, c) = rows(i, c);
      gta.add_tensor("render/" + tag, rgb);

      nlohmann::json jf;
      jf["image"] = fr.image;
      jf["hair_mask"] = fr.hair_mask;
      jf["face_mask"] = fr.face_mask;
      jf["view"] = fr.view;
      jf["expr"] = fr.expr;
      jf["eval"] = fr.eval;
      jf["eye"] = {fr.eye.x(), fr.eye.y(), fr.eye.z()};
      jf["fov"] = fr.fov;
      man["frames"].push_back(jf);
    }
  }
  gta.save(dir + "/gt.gsar");
  std::ofstream mf(dir + "/manifest.json");
  GS_CHECK(mf.good(), "dataset: cannot write manifest in " + dir);
  mf << man.dump(2) << "\n";
}

inline std::vector<std::string> generate_dataset(const AvatarModel& model, const std::string& root,
                                                 uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::vector<std::string> ids;
  for (long id = 0; id < model.cfg.data_identities; ++id) {
    char name[32];
    std::snprintf(name, sizeof(name), "id_%03ld", id);
    generate_identity(model, id, root + "/" + name, seed);
    ids.push_back(name);
  }
  nlohmann::json j;
  j["kind"] = "gsavatar-dataset";
  j["seed"] = seed;
  j["identities"] = ids;
  std::ofstream f(root + "/dataset.json");
  GS_CHECK(f.good(), "dataset: cannot write index");
  f << j.dump(2) << "\n";
  return ids;
}

inline std::vector<std::string> load_dataset_index(const std::string& root) {
  std::ifstream f(root + "/dataset.json");
  GS_CHECK(f.good(), "dataset: cannot open " + root + "/dataset.json");
  nlohmann::json j = nlohmann::json::parse(f);
  GS_CHECK(j.value("kind", std::string()) == "gsavatar-dataset", "dataset: bad index file");
  return j["identities"].get<std::vector<std::string>>();
}

inline IdentityData load_identity(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  GS_CHECK(mf.good(), "dataset: cannot open " + dir + "/manifest.json");
  nlohmann::json man = nlohmann::json::parse(mf);
  IdentityData out;
  out.dir = dir;
  for (const auto& e : man["expressions"]) out.expressions.push_back(e.get<std::vector<real>>());
  for (const auto& jf : man["frames"]) {
    FrameRef fr;
    fr.image = jf["image"];
    fr.hair_mask = jf["hair_mask"];
    fr.face_mask = jf["face_mask"];
    fr.view = jf["view"];
    fr.expr = jf["expr"];
    fr.eval = jf["eval"];
    fr.eye = Vec3(jf["eye"][0], jf["eye"][1], jf["eye"][2]);
    fr.fov = jf["fov"];
    out.frames.push_back(fr);
  }
  Archive gta = Archive::load(dir + "/gt.gsar");
  out.shape_offsets = gta.get_tensor("shape_offsets");
  return out;
}

inline CaptureFrame load_capture(const IdentityData& idd, const FrameRef& fr, long img_size) {
  CaptureFrame cf;
  cf.image = read_png_rgb(idd.dir + "/" + fr.image);
  cf.hair_mask = read_png_gray(idd.dir + "/" + fr.hair_mask);
  cf.face_mask = read_png_gray(idd.dir + "/" + fr.face_mask);
  cf.cam = frame_camera(fr, img_size);
  const auto& psi = idd.expressions[size_t(fr.expr)];
  cf.psi = Tensor(1, long(psi.size()));
  for (size_t i = 0; i < psi.size(); ++i) cf.psi.v[i] = psi[i];
  return cf;
}

}  // namespace gsavatar
