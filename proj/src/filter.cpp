#include "svio/filter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "svio/oracles.hpp"

namespace svio {

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

Filter::Filter(FilterConfig config) : config_(std::move(config)) {
  if (config_.cameras.empty()) {
    throw InvalidConfig("filter needs at least one camera");
  }
  gate_ = chi2_gate_2dof(config_.chi2_confidence);
}

void Filter::initialize_with(const ImuState& imu, const MatX& P0) {
  if (P0.rows() != 15 || P0.cols() != 15) {
    throw DimensionMismatch("P0 must be 15x15");
  }
  state_ = SlidingWindowState{};
  state_.imu = imu;
  state_.P = P0;
  landmarks_.clear();
  init_buffer_.clear();
  initialized_ = true;
  have_sample_ = false;
  promoted_keyframes_ = 0;
  dropped_imu_ = 0;
}

void Filter::process_imu(const ImuSample& sample) {
  if (!initialized_) {
    init_buffer_.push_back(sample);
    if (static_cast<int>(init_buffer_.size()) < config_.init_imu_samples) {
      return;
    }
    // Gravity-aligned bootstrap from the accelerometer mean; zero velocity
    // and biases, covariance from the configured init sigmas.
    Vec3 acc_mean = Vec3::Zero();
    for (const ImuSample& s : init_buffer_) acc_mean += s.acc;
    acc_mean /= static_cast<double>(init_buffer_.size());

    ImuState init;
    init.q = Quat::FromTwoVectors(acc_mean, Vec3::UnitZ());
    init.t = init_buffer_.back().t;

    MatX p0 = MatX::Zero(15, 15);
    const InitSigmas& s = config_.init;
    const double vars[5] = {s.theta * s.theta, s.p * s.p, s.v * s.v,
                            s.ba * s.ba, s.bg * s.bg};
    for (int b = 0; b < 5; ++b) {
      p0.block<3, 3>(3 * b, 3 * b) = vars[b] * Mat3::Identity();
    }
    initialize_with(init, p0);
    held_sample_ = init_buffer_.empty() ? sample : init_buffer_.back();
    have_sample_ = true;
    init_buffer_.clear();
    return;
  }

  if (!have_sample_) {
    held_sample_ = sample;
    have_sample_ = true;
    if (sample.t > state_.imu.t) propagate_to(sample.t);
    held_sample_ = sample;
    return;
  }

  if (!(sample.t > state_.imu.t)) {
    ++dropped_imu_;
    log::debug("dropped non-monotonic IMU sample");
    return;
  }
  propagate_to(sample.t);
  held_sample_ = sample;
}

void Filter::propagate_to(double t) {
  // Zero-order hold on the held sample; long gaps are split so the
  // transition series stays accurate.
  while (state_.imu.t < t - 1e-12) {
    const double dt = std::min(t - state_.imu.t, 0.05);
    const Mat15 phi = transition_matrix(state_.imu, held_sample_, dt);
    const Mat15 qd =
        discrete_noise(state_.imu, held_sample_, phi, dt, config_.noise);
    state_.imu = propagate_nominal(state_.imu, held_sample_, dt, config_.noise);
    propagate_covariance(state_, phi, qd);
  }
  state_.imu.t = t;
}

void Filter::ingest_tracks(std::int64_t clone_id,
                           const std::vector<TrackObservation>& tracks) {
  for (const TrackObservation& tr : tracks) {
    auto [it, inserted] = landmarks_.try_emplace(tr.landmark_id);
    if (inserted) {
      it->second.id = tr.landmark_id;
      it->second.status = LandmarkStatus::Candidate;
    }
    Observation obs;
    obs.landmark_id = tr.landmark_id;
    obs.clone_id = clone_id;
    obs.camera = tr.camera;
    obs.z = tr.z;
    it->second.track.push_back(obs);
  }
}

void Filter::triangulate_candidates() {
  TriangulationParams params;
  params.min_parallax_deg = config_.triangulation_min_parallax_deg;
  for (auto& [id, lm] : landmarks_) {
    if (lm.status != LandmarkStatus::Candidate) continue;
    std::int64_t first_clone = -1;
    bool multi_clone = false;
    for (const Observation& obs : lm.track) {
      if (first_clone < 0) first_clone = obs.clone_id;
      if (obs.clone_id != first_clone) multi_clone = true;
    }
    if (lm.track.size() < 2 || !multi_clone) continue;
    const TriangulationResult tri =
        triangulate(lm.track, state_, config_.cameras, config_.u, params);
    if (!tri.ok()) continue;  // geometry may improve with later frames
    lm.p_global = tri.p_global;
    lm.P = clamp_landmark_covariance(tri.P0);
    lm.status = LandmarkStatus::Estimating;
  }
}

std::vector<Observation> Filter::collect_observations() const {
  std::vector<Observation> out;
  for (const auto& [id, lm] : landmarks_) {
    if (lm.status != LandmarkStatus::Estimating) continue;
    for (const Observation& obs : lm.track) {
      if (!config_.reuse_window_observations &&
          obs.clone_id <= lm.last_update_clone) {
        continue;  // already consumed by an earlier update
      }
      out.push_back(obs);
    }
  }
  return out;
}

FilterReport Filter::process_frame(double t,
                                   const std::vector<TrackObservation>& tracks) {
  FilterReport report;
  report.t = t;
  if (!initialized_) return report;

  const auto t_start = std::chrono::steady_clock::now();
  if (state_.imu.t < t) {
    propagate_to(t);
  } else if (state_.imu.t > t + 1e-9) {
    log::warn("frame time precedes the propagated state; cloning at state time");
    report.t = t = state_.imu.t;
  }
  report.timings.propagation_ms = ms_since(t_start);

  const std::int64_t clone_id = next_clone_id_++;
  state_.augment(clone_id, false);
  ingest_tracks(clone_id, tracks);
  triangulate_candidates();

  const std::vector<Observation> observations = collect_observations();
  VecX dx;
  SchurSystem sys;
  std::vector<std::int64_t> removed;
  if (!observations.empty()) {
    auto t0 = std::chrono::steady_clock::now();
    GatingParams gating;
    gating.enabled = config_.gating_enabled;
    gating.chi2_gate = gate_;
    StackReport stack_report;
    const StackedResidualModel model =
        stack(observations, state_, landmarks_, config_.cameras, config_.u,
              gating, &stack_report, config_.exec);
    report.gated = stack_report.gated;
    report.behind_camera = stack_report.behind_camera;
    report.insufficient_track =
        static_cast<int>(stack_report.insufficient_track.size());
    report.timings.stack_ms = ms_since(t0);

    if (model.rows() > 0) {
      t0 = std::chrono::steady_clock::now();
      sys = build_equivalent(model, config_.exec);
      report.timings.build_ms = ms_since(t0);

      t0 = std::chrono::steady_clock::now();
      SchurOutcome outcome = schur_marginalize(sys, config_.c3_eps, config_.exec);
      removed = outcome.removed;
      for (std::int64_t id : removed) {
        auto it = landmarks_.find(id);
        if (it != landmarks_.end()) it->second.status = LandmarkStatus::Candidate;
      }
      report.timings.marginalize_ms = ms_since(t0);

      t0 = std::chrono::steady_clock::now();
      const PoseUpdateResult result = ekf_update_pose(state_, outcome.prm);
      report.timings.pose_update_ms = ms_since(t0);

      if (result.ok) {
        report.updated = true;
        report.dx_norm = result.dx.norm();
        report.landmarks_used =
            model.num_landmarks() - static_cast<int>(removed.size());
        report.observations_used = model.rows() / 2;
        dx = result.dx;

        t0 = std::chrono::steady_clock::now();
        if (config_.landmark_solver == LandmarkSolverKind::Ekf) {
          std::vector<LandmarkResidual> residuals =
              split_landmark_system(sys, dx);
          std::erase_if(residuals, [&](const LandmarkResidual& r) {
            return std::find(removed.begin(), removed.end(), r.id) !=
                   removed.end();
          });
          update_landmarks(landmarks_, residuals, config_.exec);
          for (const LandmarkResidual& r : residuals) {
            auto it = landmarks_.find(r.id);
            if (it != landmarks_.end()) it->second.last_update_clone = clone_id;
          }
        } else {
          std::vector<std::int64_t> used;
          used.reserve(model.landmarks.size());
          for (const LandmarkRows& lr : model.landmarks) {
            if (std::find(removed.begin(), removed.end(), lr.landmark_id) ==
                removed.end()) {
              used.push_back(lr.landmark_id);
            }
          }
          run_gn_landmark_refinement(used);
          for (std::int64_t id : used) {
            auto it = landmarks_.find(id);
            if (it != landmarks_.end()) it->second.last_update_clone = clone_id;
          }
        }
        report.timings.landmark_update_ms = ms_since(t0);

        // Divergence guard: estimated landmarks must stay in front of the
        // cameras that observe them.
        for (auto& [id, lm] : landmarks_) {
          if (lm.status != LandmarkStatus::Estimating) continue;
          for (const Observation& obs : lm.track) {
            const ClonePose& clone = state_.clone(obs.clone_id);
            const PinholeCamera& cam =
                config_.cameras[static_cast<std::size_t>(obs.camera)];
            const Vec3 p_cam = cam.to_camera(
                clone.q.toRotationMatrix().transpose() * (lm.p_global - clone.p));
            if (p_cam.z() <= 0.0) {
              lm.status = LandmarkStatus::Rejected;
              break;
            }
          }
        }
      }
    }
  }

  const bool keyframe = select_keyframe(tracks);
  state_.clones.back().is_keyframe = keyframe;
  report.is_keyframe = keyframe;

  manage_window();
  prune_landmarks();
  report.window_size = static_cast<int>(state_.clones.size());
  return report;
}

void Filter::run_gn_landmark_refinement(const std::vector<std::int64_t>& used) {
  for (std::int64_t id : used) {
    auto it = landmarks_.find(id);
    if (it == landmarks_.end()) continue;
    Landmark& lm = it->second;
    try {
      lm.p_global = oracles::gauss_newton_landmark(
          lm.track, state_, config_.cameras, lm.p_global);
    } catch (const SingularSystem&) {
      lm.status = LandmarkStatus::Candidate;
    }
  }
}

bool Filter::select_keyframe(const std::vector<TrackObservation>& tracks) const {
  if (state_.clones.empty()) return true;
  // During frame processing the candidate clone was just augmented and is
  // not flagged yet, so the newest flagged clone is the previous keyframe.
  const ClonePose* last_keyframe = nullptr;
  for (const ClonePose& clone : state_.clones) {
    if (clone.is_keyframe) last_keyframe = &clone;
  }
  if (last_keyframe == nullptr) return true;

  // Rule 1: average pixel parallax to the previous keyframe.
  const double fx = config_.cameras.front().fx;
  double parallax_sum = 0.0;
  int parallax_count = 0;
  int tracked = 0;
  for (const TrackObservation& tr : tracks) {
    auto it = landmarks_.find(tr.landmark_id);
    if (it == landmarks_.end()) continue;
    bool seen_before = false;
    const Observation* kf_obs = nullptr;
    for (const Observation& obs : it->second.track) {
      if (obs.clone_id != state_.clones.back().id) seen_before = true;
      if (obs.clone_id == last_keyframe->id && obs.camera == tr.camera) {
        kf_obs = &obs;
      }
    }
    if (seen_before && tr.camera == 0) ++tracked;
    if (kf_obs != nullptr) {
      parallax_sum += (tr.z - kf_obs->z).norm() * fx;
      ++parallax_count;
    }
  }
  if (parallax_count > 0 &&
      parallax_sum / parallax_count >= config_.keyframe.parallax_px) {
    return true;
  }

  // Rule 2: tracked landmark count below threshold.
  if (tracked < config_.keyframe.min_tracked_landmarks) return true;

  // Rule 3: pose gap to the nearest keyframe out of range.
  double min_rot = 1e9, min_trans = 1e9;
  for (const ClonePose& clone : state_.clones) {
    if (!clone.is_keyframe) continue;
    const double rot =
        Eigen::AngleAxisd(clone.q.conjugate() * state_.imu.q).angle();
    min_rot = std::min(min_rot, std::abs(rot));
    min_trans = std::min(min_trans, (clone.p - state_.imu.p).norm());
  }
  if (min_rot >= config_.keyframe.max_rotation_gap ||
      min_trans >= config_.keyframe.max_translation_gap) {
    return true;
  }
  return false;
}

void Filter::manage_window() {
  // Window layout: promoted keyframes first (oldest clones), then the most
  // recent temporal clones. When the temporal section overflows, its oldest
  // member is promoted if its frame was flagged keyframe, otherwise it is
  // marginalized; the keyframe section is FIFO-bounded.
  int k = promoted_keyframes_;
  while (static_cast<int>(state_.clones.size()) - k >
         config_.max_temporal_clones) {
    const ClonePose& oldest_temporal =
        state_.clones[static_cast<std::size_t>(k)];
    if (oldest_temporal.is_keyframe) {
      ++k;
      if (k > config_.max_keyframe_clones) {
        marginalize(state_.clones.front().id);
        --k;
      }
    } else {
      marginalize(oldest_temporal.id);
    }
  }
  promoted_keyframes_ = k;
}

void Filter::marginalize(std::int64_t clone_id) {
  state_.marginalize_clone(clone_id);
  for (auto& [id, lm] : landmarks_) {
    std::erase_if(lm.track, [clone_id](const Observation& obs) {
      return obs.clone_id == clone_id;
    });
  }
}

void Filter::prune_landmarks() {
  std::erase_if(landmarks_,
                [](const auto& kv) { return kv.second.track.empty(); });
}

std::vector<FilterReport> run_streams(Filter& filter,
                                      std::span<const ImuSample> imu,
                                      std::span<const FrameInput> frames,
                                      const FrameCallback& on_frame) {
  std::vector<FilterReport> reports;
  reports.reserve(frames.size());
  std::size_t i = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const FrameInput& frame = frames[f];
    while (i < imu.size() && imu[i].t <= frame.t) {
      filter.process_imu(imu[i]);
      ++i;
    }
    if (filter.initialized() && filter.state().imu.t < frame.t &&
        i < imu.size() && i > 0) {
      // Bridge to the exact frame time with a sample interpolated between
      // the bracketing measurements.
      const ImuSample& a = imu[i - 1];
      const ImuSample& b = imu[i];
      const double w = (frame.t - a.t) / (b.t - a.t);
      ImuSample interp;
      interp.t = frame.t;
      interp.omega = (1.0 - w) * a.omega + w * b.omega;
      interp.acc = (1.0 - w) * a.acc + w * b.acc;
      filter.process_imu(interp);
    }
    reports.push_back(filter.process_frame(frame.t, frame.tracks));
    if (on_frame) on_frame(f, reports.back());
  }
  return reports;
}

}  // namespace svio
