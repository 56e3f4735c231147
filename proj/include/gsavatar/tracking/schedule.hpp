#pragma once

#include <fstream>
#include <sstream>

#include "gsavatar/core/tensor.hpp"

namespace gsavatar {

// Landmark-sequence utilities: motion-aware iteration scheduling plus eye and
// lip structural losses. Landmark convention: row 0 = left eye center, row 1
// = right eye center (used for inter-eye normalization); the eye/lip subsets
// list [upper, lower, ...] so the first two rows define d_eye / d_lip.
struct LandmarkFrame {
  Tensor landmarks;  // (K,2) pixels
  std::vector<long> eye_idx, lip_idx;

  real inter_eye() const {
    real dx = landmarks(0, 0) - landmarks(1, 0);
    real dy = landmarks(0, 1) - landmarks(1, 1);
    real d = std::sqrt(dx * dx + dy * dy);
    GS_CHECK(d > 1e-9, "landmarks: coincident eye centers");
    return d;
  }

  static real subset_gap(const Tensor& lmk, const std::vector<long>& idx) {
    GS_CHECK(idx.size() >= 2, "landmarks: subset needs upper+lower points");
    real dx = lmk(idx[0], 0) - lmk(idx[1], 0);
    real dy = lmk(idx[0], 1) - lmk(idx[1], 1);
    return std::sqrt(dx * dx + dy * dy);
  }

  real d_eye() const { return subset_gap(landmarks, eye_idx); }
  real d_lip() const { return subset_gap(landmarks, lip_idx); }
};

struct ScheduleParams {
  long n0 = 50;
  long delta = 10;
  real d_th = 2.0;
  real lambda = 0.8;
  long n_max = 150;
};

struct ScheduleState {
  long n_prev = 0;
  ScheduleParams params;

  explicit ScheduleState(const ScheduleParams& p) : n_prev(p.n0), params(p) {
    GS_CHECK(p.n0 <= p.n_max, "schedule: N0 must not exceed N_max");
    GS_CHECK(p.lambda >= 0 && p.lambda < 1, "schedule: lambda in [0,1)");
  }
};

// Mean landmark distance to the reference frame, in inter-eye units of the
// reference (normalization applied before the schedule formula).
inline real landmark_distance(const LandmarkFrame& frame, const LandmarkFrame& ref) {
  GS_CHECK(frame.landmarks.rows() == ref.landmarks.rows(), "landmark_distance: count mismatch");
  real sum = 0;
  long K = frame.landmarks.rows();
  for (long k = 0; k < K; ++k) {
    real dx = frame.landmarks(k, 0) - ref.landmarks(k, 0);
    real dy = frame.landmarks(k, 1) - ref.landmarks(k, 1);
    sum += std::sqrt(dx * dx + dy * dy);
  }
  return sum / real(K) / ref.inter_eye();
}

inline long motion_iters_proposal(real d_lmk, const ScheduleParams& p) {
  if (d_lmk > p.d_th) return p.n0 + long(std::floor(real(p.delta) * (d_lmk - p.d_th)));
  return p.n0;
}

inline long smooth_iters(ScheduleState& state, long n_cur) {
  real blended = state.params.lambda * real(state.n_prev) +
                 (1.0 - state.params.lambda) * real(n_cur);
  long n_t = std::min(long(std::floor(blended)), state.params.n_max);
  state.n_prev = n_t;
  return n_t;
}

// gamma * (mean per-point L2 over the subset) + (1-gamma) * |d_pred - d_gt|
inline real subset_loss(const LandmarkFrame& pred, const LandmarkFrame& gt,
                        const std::vector<long>& idx, real d_pred, real d_gt, real gamma) {
  real pts = 0;
  for (long k : idx) {
    real dx = pred.landmarks(k, 0) - gt.landmarks(k, 0);
    real dy = pred.landmarks(k, 1) - gt.landmarks(k, 1);
    pts += std::sqrt(dx * dx + dy * dy);
  }
  pts /= real(idx.size());
  return gamma * pts + (1.0 - gamma) * std::abs(d_pred - d_gt);
}

inline real eye_closure_loss(const LandmarkFrame& pred, const LandmarkFrame& gt, real gamma) {
  return subset_loss(pred, gt, gt.eye_idx, pred.d_eye(), gt.d_eye(), gamma);
}

inline real lip_align_loss(const LandmarkFrame& pred, const LandmarkFrame& gt, real gamma) {
  return subset_loss(pred, gt, gt.lip_idx, pred.d_lip(), gt.d_lip(), gamma);
}

// ---------------------------------------------------------------------------
// landmark CSV: '#' header lines list the subset indices, then one row per
// frame: frame_id,x0,y0,x1,y1,...

inline std::vector<LandmarkFrame> load_landmark_csv(const std::string& path) {
  std::ifstream f(path);
  GS_CHECK(f.good(), "landmarks: cannot open " + path);
  std::vector<long> eye_idx, lip_idx;
  std::vector<LandmarkFrame> frames;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tag;
      ss >> tag;
      std::vector<long>* dst = nullptr;
      if (tag == "eye:") dst = &eye_idx;
      if (tag == "lip:") dst = &lip_idx;
      GS_CHECK(dst, "landmarks: unknown header tag " + tag);
      long v;
      while (ss >> v) dst->push_back(v);
      continue;
    }
    if (line.rfind("frame_id", 0) == 0) continue;
    std::istringstream ss(line);
    std::vector<real> vals;
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    GS_CHECK(vals.size() >= 3 && (vals.size() - 1) % 2 == 0, "landmarks: bad row");
    long K = long(vals.size() - 1) / 2;
    LandmarkFrame fr;
    fr.landmarks = Tensor(K, 2);
    for (long k = 0; k < K; ++k) {
      fr.landmarks(k, 0) = vals[size_t(1 + 2 * k)];
      fr.landmarks(k, 1) = vals[size_t(2 + 2 * k)];
    }
    fr.eye_idx = eye_idx;
    fr.lip_idx = lip_idx;
    frames.push_back(std::move(fr));
  }
  GS_CHECK(!frames.empty(), "landmarks: no frames in " + path);
  return frames;
}

struct TrackTraceRow {
  long frame = 0;
  real d_lmk = 0;
  long n_cur = 0, n_t = 0;
  real eye_loss = 0, lip_loss = 0;
};

// Drives the schedule over a sequence against its first frame.
inline std::vector<TrackTraceRow> run_track_demo(const std::vector<LandmarkFrame>& frames,
                                                 const ScheduleParams& params, real gamma) {
  ScheduleState state(params);
  std::vector<TrackTraceRow> rows;
  const LandmarkFrame& ref = frames.front();
  for (size_t i = 0; i < frames.size(); ++i) {
    TrackTraceRow r;
    r.frame = long(i);
    r.d_lmk = landmark_distance(frames[i], ref);
    r.n_cur = motion_iters_proposal(r.d_lmk, params);
    r.n_t = smooth_iters(state, r.n_cur);
    r.eye_loss = eye_closure_loss(frames[i], ref, gamma);
    r.lip_loss = lip_align_loss(frames[i], ref, gamma);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace gsavatar
