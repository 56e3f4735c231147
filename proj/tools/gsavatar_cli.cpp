// Command-line front end for the avatar pipeline: dataset generation,
// training, reconstruction, refinement, animation, hairstyle transfer,
// texture editing, evaluation and the tracking-schedule demo.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "gsavatar/data/dataset.hpp"
#include "gsavatar/io/checkpoint.hpp"
#include "gsavatar/io/splat_ply.hpp"
#include "gsavatar/tracking/schedule.hpp"
#include "gsavatar/train/train.hpp"

namespace fs = std::filesystem;
using namespace gsavatar;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string checkpoint;
  long seed = -1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_checkpoint) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--set", o.overrides, "config override key=value (repeatable)");
  if (with_checkpoint)
    cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint (supplies the config)");
}

Config resolve_config(const CommonOpts& o) {
  Config cfg;
  if (!o.checkpoint.empty())
    cfg = checkpoint_config(o.checkpoint);
  else if (!o.config_path.empty())
    cfg = Config::load(o.config_path);
  for (const auto& kv : o.overrides) {
    auto eq = kv.find('=');
    GS_CHECK(eq != std::string::npos, "--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed >= 0) cfg.seed = o.seed;
  return cfg;
}

AvatarModel make_model(const CommonOpts& o, const Config& cfg) {
  AvatarModel model = AvatarModel::create(cfg);
  if (!o.checkpoint.empty()) load_checkpoint(o.checkpoint, model.params);
  return model;
}

std::vector<IdentityData> load_identities(const std::string& data_dir) {
  std::vector<IdentityData> out;
  for (const auto& name : load_dataset_index(data_dir))
    out.push_back(load_identity(data_dir + "/" + name));
  return out;
}

CaptureSet training_captures(const IdentityData& idd, const Config& cfg, long limit) {
  CaptureSet caps;
  for (const auto& fr : idd.frames) {
    if (fr.eval) continue;
    caps.push_back(load_capture(idd, fr, cfg.img_size));
    if (limit > 0 && long(caps.size()) == limit) break;
  }
  GS_CHECK(!caps.empty(), "identity has no training frames");
  return caps;
}

std::string config_key_listing() {
  std::string out = "Config keys (override with --set key=value):\n";
  for (const auto& f : Config::fields()) {
    out += "  ";
    out += f.name;
    out += ": ";
    out += f.desc;
    out += "\n";
  }
  return out;
}

int cmd_gen_data(const CommonOpts& o, const std::string& out_dir) {
  Config cfg = resolve_config(o);
  AvatarModel model = AvatarModel::create(cfg);
  auto ids = generate_dataset(model, out_dir, uint64_t(cfg.seed));
  std::cout << "generated " << ids.size() << " identities under " << out_dir << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume) {
  Config cfg = resolve_config(o);
  fs::create_directories(out_dir);
  auto identities = load_identities(data_dir);
  AvatarModel model = AvatarModel::create(cfg);
  long start = 0;
  if (!resume.empty()) start = load_checkpoint(resume, model.params);

  Trainer trainer(model, identities);
  trainer.step_idx = start;
  std::ofstream log(out_dir + "/log.csv", start == 0 ? std::ios::trunc : std::ios::app);
  if (start == 0) log << "step,loss,grad_norm,lr,gaussians\n";
  for (long s = start; s < cfg.steps; ++s) {
    StepRecord rec = trainer.train_step();
    log << s << "," << rec.total << "," << rec.grad_norm << "," << rec.lr << "," << rec.gaussians
        << "\n";
    if ((s + 1) % 10 == 0 || s + 1 == cfg.steps) {
      std::cout << "step " << (s + 1) << "/" << cfg.steps << " loss " << rec.total << " lr "
                << rec.lr << "\n";
      log.flush();
    }
    if ((s + 1) % cfg.checkpoint_every == 0 || s + 1 == cfg.steps)
      save_checkpoint(out_dir + "/checkpoint.gsar", model.params, cfg, s + 1);
  }
  std::cout << "checkpoint written to " << out_dir << "/checkpoint.gsar\n";
  return 0;
}

int cmd_reconstruct(const CommonOpts& o, const std::string& identity_dir, const std::string& out,
                    long inputs, const std::string& ply_out) {
  Config cfg = resolve_config(o);
  GS_CHECK(!o.checkpoint.empty(), "reconstruct requires --checkpoint");
  AvatarModel model = make_model(o, cfg);
  IdentityData idd = load_identity(identity_dir);
  CaptureSet caps = training_captures(idd, cfg, inputs);
  AvatarBundle bundle = reconstruct(model, caps, idd.shape_offsets, uint64_t(cfg.seed));
  save_bundle(bundle, out);
  std::cout << "bundle from " << caps.size() << " inputs written to " << out << "\n";
  if (!ply_out.empty()) {
    AvatarGaussians g =
        decode_bundle(model, bundle, std::vector<real>(size_t(cfg.blend_count), 0.0));
    export_splat_ply(g.combined(), ply_out);
    std::cout << "splats written to " << ply_out << "\n";
  }
  return 0;
}

int cmd_refine(const CommonOpts& o, const std::string& identity_dir, const std::string& bundle_in,
               const std::string& out, long epochs) {
  Config cfg = resolve_config(o);
  if (epochs > 0) cfg.refine_epochs = epochs;
  GS_CHECK(!o.checkpoint.empty(), "refine requires --checkpoint");
  AvatarModel model = make_model(o, cfg);
  AvatarBundle bundle = load_bundle(bundle_in, cfg);
  IdentityData idd = load_identity(identity_dir);
  CaptureSet caps = training_captures(idd, cfg, cfg.input_max);
  RefineRecord rec = fast_refine(model, bundle, caps);
  save_bundle(bundle, out);
  std::cout << "refined over " << cfg.refine_epochs << " epochs, loss " << rec.first_loss << " -> "
            << rec.last_loss << ", written to " << out << "\n";
  return 0;
}

int cmd_animate(const CommonOpts& o, const std::string& bundle_in, const std::string& out_dir,
                long n_frames, bool vary_expression) {
  Config cfg = resolve_config(o);
  GS_CHECK(!o.checkpoint.empty(), "animate requires --checkpoint");
  AvatarModel model = make_model(o, cfg);
  AvatarBundle bundle = load_bundle(bundle_in, cfg);
  fs::create_directories(out_dir);

  auto t0 = std::chrono::steady_clock::now();
  for (long i = 0; i < n_frames; ++i) {
    real angle = 2.0 * kPi * real(i) / real(n_frames);
    Camera cam = Camera::look_at(ring_eye(angle), Vec3(0, 0, 0), Vec3(0, 1, 0), 0.45,
                                 cfg.img_size, cfg.img_size);
    std::vector<real> psi(size_t(cfg.blend_count), 0.0);
    if (vary_expression)
      for (size_t k = 0; k < psi.size(); ++k)
        psi[k] = 0.5 * std::sin(2.0 * kPi * real(i) / real(n_frames) + real(k));
    AvatarGaussians g = decode_bundle(model, bundle, psi);
    Tensor rows = model.render(g, cam)->val;
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04ld.png", i);
    write_png_rgb(out_dir + "/" + std::string(name),
                  frame_to_image(rows, cfg.img_size, cfg.img_size));
  }
  auto t1 = std::chrono::steady_clock::now();
  real secs = std::chrono::duration<real>(t1 - t0).count();
  std::printf("rendered %ld frames in %.2f s (%.2f FPS)\n", n_frames, secs,
              real(n_frames) / std::max(secs, real(1e-9)));
  return 0;
}

int cmd_transfer_hair(const CommonOpts& o, const std::string& face_bundle,
                      const std::string& hair_bundle, const std::string& out) {
  Config cfg = resolve_config(o);
  AvatarBundle a = load_bundle(face_bundle, cfg);
  AvatarBundle b = load_bundle(hair_bundle, cfg);
  save_bundle(transfer_hair(a, b), out);
  std::cout << "hair of " << hair_bundle << " transferred onto " << face_bundle << " -> " << out
            << "\n";
  return 0;
}

int cmd_edit_texture(const CommonOpts& o, const std::string& bundle_in,
                     const std::string& overlay_path, const std::string& mask_path,
                     const std::string& region_name, const std::string& out) {
  Config cfg = resolve_config(o);
  AvatarModel model = make_model(o, cfg);
  AvatarBundle bundle = load_bundle(bundle_in, cfg);
  Region region;
  if (region_name == "head" || region_name == "face")
    region = Region::Head;
  else if (region_name == "hair" || region_name == "scalp")
    region = Region::Scalp;
  else
    throw error("unknown region: " + region_name + " (expected head|hair)");
  ImageRGB overlay = read_png_rgb(overlay_path);
  ImageGray mask = read_png_gray(mask_path);
  save_bundle(edit_texture(bundle, model, overlay, mask, region), out);
  std::cout << "texture edit on " << region_name << " region written to " << out << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& identity_dir, const std::string& bundle_in,
             const std::string& out_csv, const std::string& split) {
  Config cfg = resolve_config(o);
  GS_CHECK(!o.checkpoint.empty(), "eval requires --checkpoint");
  AvatarModel model = make_model(o, cfg);
  AvatarBundle bundle = load_bundle(bundle_in, cfg);
  IdentityData idd = load_identity(identity_dir);
  GS_CHECK(split == "eval" || split == "train", "--split must be eval or train");
  auto rows = evaluate_bundle(model, bundle, idd, split == "eval");
  std::ofstream f(out_csv);
  GS_CHECK(f.good(), "cannot write " + out_csv);
  f << "view,expr,psnr,ssim\n";
  real mean_p = 0, mean_s = 0;
  for (const auto& r : rows) {
    f << r.view << "," << r.expr << "," << r.psnr << "," << r.ssim << "\n";
    mean_p += r.psnr;
    mean_s += r.ssim;
  }
  GS_CHECK(!rows.empty(), "no frames in the requested split");
  mean_p /= real(rows.size());
  mean_s /= real(rows.size());
  f << "mean,," << mean_p << "," << mean_s << "\n";
  std::printf("%s split: %zu frames, mean PSNR %.3f dB, mean SSIM %.4f -> %s\n", split.c_str(),
              rows.size(), mean_p, mean_s, out_csv.c_str());
  return 0;
}

int cmd_track_demo(const CommonOpts& o, const std::string& landmarks, const std::string& out_csv) {
  Config cfg = resolve_config(o);
  auto frames = load_landmark_csv(landmarks);
  GS_CHECK(!frames.empty(), "landmark file has no frames");
  ScheduleParams params;
  params.n0 = cfg.track_n0;
  params.delta = cfg.track_delta;
  params.d_th = cfg.track_dth;
  params.lambda = cfg.track_lambda;
  params.n_max = cfg.track_nmax;
  auto rows = run_track_demo(frames, params, cfg.track_gamma);
  std::ofstream f(out_csv);
  GS_CHECK(f.good(), "cannot write " + out_csv);
  f << "frame,d_lmk,n_cur,n_t,eye_loss,lip_loss\n";
  for (const auto& r : rows)
    f << r.frame << "," << r.d_lmk << "," << r.n_cur << "," << r.n_t << "," << r.eye_loss << ","
      << r.lip_loss << "\n";
  std::cout << "trace for " << rows.size() << " frames written to " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsavatar: feed-forward Gaussian head avatars from sparse images"};
  app.require_subcommand(1);
  app.footer(config_key_listing());

  CommonOpts o;
  std::string data_dir, out_path, identity_dir, bundle_in, resume;
  std::string face_bundle, hair_bundle, overlay_path, mask_path, landmarks;
  std::string region_name = "head", split = "eval", ply_out;
  long inputs = 0, epochs = 0, n_frames = 12;
  bool vary_expr = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-view dataset");
  add_common(gen, o, false);
  gen->add_option("--out", out_path, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train the feed-forward model");
  add_common(train, o, false);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_path, "run directory for checkpoints and logs")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* rec = app.add_subcommand("reconstruct", "build an avatar bundle from captures");
  add_common(rec, o, true);
  rec->add_option("--identity", identity_dir, "identity directory")->required();
  rec->add_option("--out", out_path, "output bundle path")->required();
  rec->add_option("--inputs", inputs, "number of input frames (0 = all training frames)");
  rec->add_option("--ply", ply_out, "also export neutral-pose splats to this PLY");

  auto* ref = app.add_subcommand("refine", "fast per-identity refinement of a bundle");
  add_common(ref, o, true);
  ref->add_option("--identity", identity_dir, "identity directory")->required();
  ref->add_option("--bundle", bundle_in, "input bundle")->required();
  ref->add_option("--out", out_path, "output bundle path")->required();
  ref->add_option("--epochs", epochs, "override refinement epochs");

  auto* ani = app.add_subcommand("animate", "render a camera/expression trajectory");
  add_common(ani, o, true);
  ani->add_option("--bundle", bundle_in, "avatar bundle")->required();
  ani->add_option("--out", out_path, "output frame directory")->required();
  ani->add_option("--frames", n_frames, "trajectory length");
  ani->add_flag("--vary-expression", vary_expr, "animate the expression parameters too");

  auto* tra = app.add_subcommand("transfer-hair", "swap the hair branch between two bundles");
  add_common(tra, o, true);
  tra->add_option("--face", face_bundle, "bundle providing face and identity")->required();
  tra->add_option("--hair", hair_bundle, "bundle providing the hairstyle")->required();
  tra->add_option("--out", out_path, "output bundle path")->required();

  auto* edt = app.add_subcommand("edit-texture", "apply a UV-space color edit to a bundle");
  add_common(edt, o, true);
  edt->add_option("--bundle", bundle_in, "input bundle")->required();
  edt->add_option("--overlay", overlay_path, "UV overlay PNG")->required();
  edt->add_option("--mask", mask_path, "UV mask PNG")->required();
  edt->add_option("--region", region_name, "head|hair");
  edt->add_option("--out", out_path, "output bundle path")->required();

  auto* evl = app.add_subcommand("eval", "PSNR/SSIM table over a view split");
  add_common(evl, o, true);
  evl->add_option("--identity", identity_dir, "identity directory")->required();
  evl->add_option("--bundle", bundle_in, "avatar bundle")->required();
  evl->add_option("--out", out_path, "output CSV path")->required();
  evl->add_option("--split", split, "eval|train");

  auto* trk = app.add_subcommand("track-demo", "landmark-driven iteration schedule demo");
  add_common(trk, o, false);
  trk->add_option("--landmarks", landmarks, "landmark CSV")->required();
  trk->add_option("--out", out_path, "output trace CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(o, out_path);
    if (train->parsed()) return cmd_train(o, data_dir, out_path, resume);
    if (rec->parsed()) return cmd_reconstruct(o, identity_dir, out_path, inputs, ply_out);
    if (ref->parsed()) return cmd_refine(o, identity_dir, bundle_in, out_path, epochs);
    if (ani->parsed()) return cmd_animate(o, bundle_in, out_path, n_frames, vary_expr);
    if (tra->parsed()) return cmd_transfer_hair(o, face_bundle, hair_bundle, out_path);
    if (edt->parsed())
      return cmd_edit_texture(o, bundle_in, overlay_path, mask_path, region_name, out_path);
    if (evl->parsed()) return cmd_eval(o, identity_dir, bundle_in, out_path, split);
    if (trk->parsed()) return cmd_track_demo(o, landmarks, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 1;
}
