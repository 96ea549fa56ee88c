#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "svio/landmark_solver.hpp"
#include "svio/measurement.hpp"
#include "svio/propagation.hpp"
#include "svio/schur.hpp"
#include "svio/state.hpp"

namespace svio {

enum class LandmarkSolverKind { Ekf, GaussNewton };

struct KeyframeParams {
  double parallax_px = 25.0;
  int min_tracked_landmarks = 12;
  double max_rotation_gap = 0.5;     // rad
  double max_translation_gap = 2.0;  // m
};

struct InitSigmas {
  double theta = 2e-2;
  double p = 1e-2;
  double v = 5e-2;
  double ba = 5e-2;
  double bg = 5e-3;
};

struct FilterConfig {
  NoiseParams noise;
  std::vector<PinholeCamera> cameras;
  int max_keyframe_clones = 2;
  int max_temporal_clones = 2;
  double u = 1.0 / 458.0;  // normalized pixel noise std
  double chi2_confidence = 0.95;
  bool gating_enabled = true;
  double triangulation_min_parallax_deg = 1.0;
  double c3_eps = 1e-9;
  KeyframeParams keyframe;
  InitSigmas init;
  int init_imu_samples = 50;
  /// When true (the default), each frame's update stacks every live-window
  /// observation of the triangulated landmarks; when false, an observation
  /// is consumed by the first update that uses it.
  bool reuse_window_observations = true;
  LandmarkSolverKind landmark_solver = LandmarkSolverKind::Ekf;
  ExecPolicy exec = ExecPolicy::Parallel;
};

/// Per-camera observation of a landmark in the frame being processed.
struct TrackObservation {
  std::int64_t landmark_id = -1;
  int camera = 0;
  Vec2 z = Vec2::Zero();  // normalized coordinates
};

struct StageTimings {
  double propagation_ms = 0.0;
  double stack_ms = 0.0;
  double build_ms = 0.0;
  double marginalize_ms = 0.0;
  double pose_update_ms = 0.0;
  double landmark_update_ms = 0.0;
};

struct FilterReport {
  double t = 0.0;
  bool updated = false;
  bool is_keyframe = false;
  double dx_norm = 0.0;
  int landmarks_used = 0;
  int observations_used = 0;
  int gated = 0;
  int behind_camera = 0;
  int insufficient_track = 0;
  int window_size = 0;
  StageTimings timings;
};

/// The full estimation cycle: IMU propagation, stochastic cloning, landmark
/// lifecycle, Schur-complement pose update, per-landmark updates and window
/// management. One instance is single-threaded; independent instances can
/// run concurrently.
class Filter {
 public:
  explicit Filter(FilterConfig config);

  /// Feed one IMU sample. Propagates the state to sample.t (zero-order hold
  /// over each sample interval). Non-monotonic samples are dropped and
  /// counted. Before initialization, samples are collected for the
  /// gravity-alignment initializer.
  void process_imu(const ImuSample& sample);

  /// Process the camera frame at time t. Requires IMU coverage up to t; when
  /// the state clock is short of t the remainder is bridged with the held
  /// sample. See run_streams() for exact-time alignment by interpolation.
  FilterReport process_frame(double t,
                             const std::vector<TrackObservation>& tracks);

  /// Explicit initialization (e.g. from simulator ground truth); replaces
  /// the gravity-alignment initializer.
  void initialize_with(const ImuState& imu, const MatX& P0);

  bool initialized() const { return initialized_; }
  const SlidingWindowState& state() const { return state_; }
  const std::map<std::int64_t, Landmark>& landmarks() const {
    return landmarks_;
  }
  int dropped_imu_samples() const { return dropped_imu_; }
  const FilterConfig& config() const { return config_; }

  /// Keyframe rule: parallax to the previous keyframe at or above threshold,
  /// tracked-landmark count below threshold, or pose gap to every co-visible
  /// keyframe out of range. Exposed for tests.
  bool select_keyframe(const std::vector<TrackObservation>& tracks) const;

 private:
  void propagate_to(double t);
  void ingest_tracks(std::int64_t clone_id,
                     const std::vector<TrackObservation>& tracks);
  void triangulate_candidates();
  std::vector<Observation> collect_observations() const;
  void run_gn_landmark_refinement(const std::vector<std::int64_t>& used);
  void manage_window();
  void marginalize(std::int64_t clone_id);
  void prune_landmarks();

  FilterConfig config_;
  SlidingWindowState state_;
  std::map<std::int64_t, Landmark> landmarks_;
  bool initialized_ = false;
  bool have_sample_ = false;
  ImuSample held_sample_;
  std::vector<ImuSample> init_buffer_;
  std::int64_t next_clone_id_ = 0;
  int dropped_imu_ = 0;
  int promoted_keyframes_ = 0;
  double gate_ = 5.991464547107979;
};

/// Drives a filter from timestamped streams: feeds IMU samples in order and,
/// at each frame time, inserts a sample linearly interpolated between the
/// bracketing IMU measurements so the clone lands exactly on the frame time.
struct FrameInput {
  double t = 0.0;
  std::vector<TrackObservation> tracks;
};

using FrameCallback = std::function<void(std::size_t, const FilterReport&)>;

std::vector<FilterReport> run_streams(Filter& filter,
                                      std::span<const ImuSample> imu,
                                      std::span<const FrameInput> frames,
                                      const FrameCallback& on_frame = {});

}  // namespace svio
