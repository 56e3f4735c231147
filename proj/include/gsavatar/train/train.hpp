#pragma once

#include "gsavatar/core/adam.hpp"
#include "gsavatar/data/dataset.hpp"
#include "gsavatar/io/bundle.hpp"

namespace gsavatar {

// ---------------------------------------------------------------------------
// batch sampling + augmentation

struct TrainBatch {
  CaptureSet inputs;   // 1..input_max frames, mixed expressions and views
  CaptureSet targets;  // views_per_batch frames sharing one expression
  std::vector<real> target_psi;
  long identity = 0;
};

inline void color_jitter(ImageRGB& img, Rng& rng, const Config& cfg) {
  real b = rng.uniform(-cfg.aug_brightness, cfg.aug_brightness);
  real c = 1.0 + rng.uniform(-cfg.aug_contrast, cfg.aug_contrast);
  real s = 1.0 + rng.uniform(-cfg.aug_saturation, cfg.aug_saturation);
  for (size_t i = 0; i < img.px.size(); i += 3) {
    real gray = 0.299 * img.px[i] + 0.587 * img.px[i + 1] + 0.114 * img.px[i + 2];
    for (size_t k = 0; k < 3; ++k) {
      real v = gray + s * (img.px[i + k] - gray);
      v = 0.5 + c * (v - 0.5) + b;
      img.px[i + k] = std::clamp(v, real(0), real(1));
    }
  }
}

inline TrainBatch sample_training_batch(const std::vector<IdentityData>& identities,
                                        const Config& cfg, Rng& rng) {
  GS_CHECK(!identities.empty(), "sample: no identities");
  long id = long(rng.uniform_int(int(identities.size())));
  const IdentityData& idd = identities[size_t(id)];

  std::vector<size_t> train_frames;
  for (size_t i = 0; i < idd.frames.size(); ++i)
    if (!idd.frames[i].eval) train_frames.push_back(i);
  GS_CHECK(long(train_frames.size()) >= cfg.views_per_batch,
           "sample: identity has too few training frames");

  TrainBatch batch;
  batch.identity = id;
  long n_inputs = cfg.input_min + long(rng.uniform_int(int(cfg.input_max - cfg.input_min + 1)));
  std::vector<size_t> pool = train_frames;
  for (long k = 0; k < n_inputs; ++k) {
    size_t pick = size_t(rng.uniform_int(int(pool.size())));
    batch.inputs.push_back(load_capture(idd, idd.frames[pool[pick]], cfg.img_size));
    pool.erase(pool.begin() + long(pick));
  }
  if (rng.uniform() < cfg.aug_prob)
    for (auto& cf : batch.inputs) color_jitter(cf.image, rng, cfg);

  long expr = long(rng.uniform_int(int(idd.expressions.size())));
  std::vector<size_t> expr_frames;
  for (size_t i : train_frames)
    if (idd.frames[i].expr == expr) expr_frames.push_back(i);
  GS_CHECK(long(expr_frames.size()) >= cfg.views_per_batch, "sample: too few views for expression");
  for (long k = 0; k < cfg.views_per_batch; ++k) {
    size_t pick = size_t(rng.uniform_int(int(expr_frames.size())));
    batch.targets.push_back(load_capture(idd, idd.frames[expr_frames[pick]], cfg.img_size));
    expr_frames.erase(expr_frames.begin() + long(pick));
  }
  batch.target_psi = idd.expressions[size_t(expr)];
  return batch;
}

// ---------------------------------------------------------------------------
// loss assembly

inline Var capture_loss(const AvatarModel& model, const AvatarGaussians& g,
                        const CaptureFrame& target, const LossWeights& lw,
                        const PerceptualProxy& proxy) {
  long H = model.cfg.img_size, W = model.cfg.img_size;
  Var out = model.render(g, target.cam);
  Var pred_rgb = transpose(slice_cols(out, 0, 3));
  Var photo = loss_photo(pred_rgb, constant(image_to_chw(target.image)), H, W, lw, proxy);
  if (lw.lambda_hair == 0 && lw.lambda_seg == 0) return photo;

  Var hair_out = model.render_hair_only(g, target.cam);
  Var pred_hair = transpose(slice_cols(hair_out, 0, 3));
  Tensor gt_hair(3, H * W);
  for (long i = 0; i < H * W; ++i)
    for (long c = 0; c < 3; ++c)
      gt_hair(c, i) = target.image.px[size_t(i * 3 + c)] * target.hair_mask.px[size_t(i)];
  Var pred_seg = transpose(slice_cols(out, 4, 6));
  Tensor gt_seg(2, H * W);
  for (long i = 0; i < H * W; ++i) {
    gt_seg(0, i) = target.face_mask.px[size_t(i)];
    gt_seg(1, i) = target.hair_mask.px[size_t(i)];
  }
  Var region = loss_hair_region(pred_hair, constant(std::move(gt_hair)), pred_seg,
                                constant(std::move(gt_seg)), lw);
  return add(photo, region);
}

struct StepRecord {
  real total = 0, reg = 0;
  real grad_norm = 0, lr = 0;
  long gaussians = 0;
};

struct Trainer {
  AvatarModel& model;
  std::vector<IdentityData>& identities;
  Adam opt;
  PerceptualProxy proxy;
  Rng rng;
  long step_idx = 0;

  Trainer(AvatarModel& m, std::vector<IdentityData>& ids)
      : model(m), identities(ids), proxy(uint64_t(m.cfg.seed)), rng(uint64_t(m.cfg.seed), 3) {}

  StepRecord train_step() {
    const Config& cfg = model.cfg;
    TrainBatch batch = sample_training_batch(identities, cfg, rng);
    const IdentityData& idd = identities[size_t(batch.identity)];
    model.params.zero_grads();

    TokenState st = model.encode(batch.inputs);
    AvatarGaussians g = model.decode(st, idd.shape_offsets, batch.target_psi,
                                     uint64_t(cfg.seed) + uint64_t(step_idx));
    LossWeights lw = model.loss_weights();
    Var total;
    for (const auto& target : batch.targets) {
      Var l = capture_loss(model, g, target, lw, proxy);
      total = total ? add(total, l) : l;
    }
    total = mul_scalar(total, 1.0 / real(batch.targets.size()));
    total = add(total, loss_reg(g.face_local.dpos, g.face_local.sigma, lw));

    StepRecord rec;
    rec.total = total->val(0, 0);
    rec.gaussians = g.face.count() + g.hair.gauss.count();
    if (!std::isfinite(rec.total))
      throw error("train_step: non-finite loss at step " + std::to_string(step_idx) +
                  " (identity " + std::to_string(batch.identity) + ", " +
                  std::to_string(batch.inputs.size()) + " inputs)");
    backward(total);
    auto trainable = model.params.trainable();
    rec.grad_norm = clip_global_norm(trainable, cfg.clip_norm);
    rec.lr = warmup_cosine_lr(step_idx, cfg.steps, cfg.warmup, cfg.lr);
    opt.step(trainable, rec.lr);
    ++step_idx;
    return rec;
  }
};

// ---------------------------------------------------------------------------
// single-pass reconstruction and fast refinement

// Encoder+backbone pass; >input_max captures are split into seeded random
// chunks and the aggregated tokens averaged.
inline AvatarBundle reconstruct(const AvatarModel& model, const CaptureSet& captures,
                                const Tensor& shape_offsets, uint64_t seed) {
  GS_CHECK(!captures.empty(), "reconstruct: empty capture set");
  long limit = model.cfg.input_max;
  AvatarBundle b;
  if (long(captures.size()) <= limit) {
    TokenState st = model.encode(captures);
    b.t_head = st.t_head->val;
    b.t_hair = st.t_hair->val;
    b.hair_base = st.hair_base->val;
    b.frontal = st.frontal;
  } else {
    Rng rng(seed, 5);
    std::vector<size_t> order(captures.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(rng.uniform_int(int(i)))]);
    long chunks = (long(captures.size()) + limit - 1) / limit;
    for (long c = 0; c < chunks; ++c) {
      CaptureSet sub;
      for (long k = c * limit; k < std::min<long>((c + 1) * limit, long(captures.size())); ++k)
        sub.push_back(captures[order[size_t(k)]]);
      TokenState st = model.encode(sub);
      auto acc = [&](Tensor& dst, const Tensor& src) {
        if (dst.numel() == 0)
          dst = src;
        else
          for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
      };
      acc(b.t_head, st.t_head->val);
      acc(b.t_hair, st.t_hair->val);
      acc(b.hair_base, st.hair_base->val);
    }
    for (auto* t : {&b.t_head, &b.t_hair, &b.hair_base})
      for (auto& x : t->v) x /= real(chunks);
    b.frontal = select_frontal(captures);
  }
  b.shape_offsets = shape_offsets;
  b.sampler_seed = seed;
  b.decoder_params = snapshot_decoders(model);
  b.config_hash = AvatarBundle::hash_config(model.cfg);
  return b;
}

struct RefineRecord {
  real first_loss = 0, last_loss = 0;
  uint64_t frozen_checksum_before = 0, frozen_checksum_after = 0;
};

// Optimizes the cached tokens and the decoder weights against the input
// captures; encoders and backbone stay frozen (verified by checksum).
inline RefineRecord fast_refine(AvatarModel& model, AvatarBundle& bundle,
                                const CaptureSet& captures) {
  const Config& cfg = model.cfg;
  RefineRecord rec;
  rec.frozen_checksum_before =
      model.params.checksum("enc.") ^ (model.params.checksum("backbone.") * 0x9E3779B97F4A7C15ULL);

  install_decoders(model, bundle);
  Var t_head = make_var(bundle.t_head, true);
  Var t_hair = make_var(bundle.t_hair, true);
  Var hair_base = make_var(bundle.hair_base, false);

  model.params.set_trainable("enc.", false);
  model.params.set_trainable("backbone.", false);
  std::vector<Var> trainable = model.params.trainable();
  trainable.push_back(t_head);
  trainable.push_back(t_hair);

  PerceptualProxy proxy(uint64_t(cfg.seed));
  LossWeights lw = model.loss_weights();
  Adam opt;
  for (long epoch = 0; epoch < cfg.refine_epochs; ++epoch) {
    for (auto& v : trainable) v->zero_grad();
    TokenState st;
    st.t_head = t_head;
    st.t_hair = t_hair;
    st.hair_base = hair_base;
    st.frontal = bundle.frontal;
    Var total;
    for (const auto& cap : captures) {
      std::vector<real> psi(cap.psi.v.begin(), cap.psi.v.end());
      AvatarGaussians g = model.decode(st, bundle.shape_offsets, psi, bundle.sampler_seed);
      Var l = capture_loss(model, g, cap, lw, proxy);
      l = add(l, loss_reg(g.face_local.dpos, g.face_local.sigma, lw));
      total = total ? add(total, l) : l;
    }
    total = mul_scalar(total, 1.0 / real(captures.size()));
    real lv = total->val(0, 0);
    if (epoch == 0) rec.first_loss = lv;
    rec.last_loss = lv;
    GS_CHECK(std::isfinite(lv), "fast_refine: non-finite loss");
    backward(total);
    clip_global_norm(trainable, cfg.clip_norm);
    opt.step(trainable, linear_decay_lr(epoch, cfg.refine_epochs, cfg.refine_lr, cfg.refine_final));
  }
  model.params.set_trainable("enc.", true);
  model.params.set_trainable("backbone.", true);

  rec.frozen_checksum_after =
      model.params.checksum("enc.") ^ (model.params.checksum("backbone.") * 0x9E3779B97F4A7C15ULL);
  GS_CHECK(rec.frozen_checksum_before == rec.frozen_checksum_after,
           "fast_refine: frozen weights changed");

  bundle.t_head = t_head->val;
  bundle.t_hair = t_hair->val;
  bundle.decoder_params = snapshot_decoders(model);
  return rec;
}

// ---------------------------------------------------------------------------
// evaluation

struct EvalRow {
  long view = 0, expr = 0;
  real psnr = 0, ssim = 0;
};

inline std::vector<EvalRow> evaluate_bundle(AvatarModel& model, const AvatarBundle& bundle,
                                            const IdentityData& idd, bool eval_split) {
  std::vector<EvalRow> rows;
  long H = model.cfg.img_size, W = model.cfg.img_size;
  for (const auto& fr : idd.frames) {
    if (fr.eval != eval_split) continue;
    CaptureFrame cap = load_capture(idd, fr, model.cfg.img_size);
    std::vector<real> psi(cap.psi.v.begin(), cap.psi.v.end());
    AvatarGaussians g = decode_bundle(model, bundle, psi);
    Tensor out = model.render(g, cap.cam)->val;
    Tensor pred(3, H * W), gt = image_to_chw(cap.image);
    for (long i = 0; i < H * W; ++i)
      for (long c = 0; c < 3; ++c) pred(c, i) = out(i, c);
    EvalRow r;
    r.view = fr.view;
    r.expr = fr.expr;
    r.psnr = psnr_value(pred, gt);
    r.ssim = ssim_value(pred, gt, H, W);
    rows.push_back(r);
  }
  return rows;
}

inline real mean_psnr(const std::vector<EvalRow>& rows) {
  real s = 0;
  for (const auto& r : rows) s += r.psnr;
  return rows.empty() ? 0 : s / real(rows.size());
}

}  // namespace gsavatar
