#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "svio/core.hpp"
#include "svio/geometry.hpp"

namespace svio {

/// Nominal IMU state: attitude q (IMU-to-global), position, velocity and the
/// accelerometer / gyroscope biases, all in the global frame where relevant.
struct ImuState {
  Quat q = Quat::Identity();
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  double t = 0.0;
};

/// A cloned pose held in the sliding window.
struct ClonePose {
  std::int64_t id = -1;
  Quat q = Quat::Identity();
  Vec3 p = Vec3::Zero();
  double t = 0.0;
  bool is_keyframe = false;
};

/// One image observation of a landmark: normalized coordinates seen from a
/// given clone and camera (0 = left, 1 = right).
struct Observation {
  std::int64_t landmark_id = -1;
  std::int64_t clone_id = -1;
  int camera = 0;
  Vec2 z = Vec2::Zero();
};

enum class LandmarkStatus { Candidate, Estimating, Rejected };

/// A landmark with its own 3x3 covariance, kept independent of the pose
/// covariance by construction (no cross terms are ever stored).
struct Landmark {
  std::int64_t id = -1;
  Vec3 p_global = Vec3::Zero();
  Mat3 P = Mat3::Zero();
  std::vector<Observation> track;
  LandmarkStatus status = LandmarkStatus::Candidate;
  /// Newest clone whose update consumed this landmark's observations; used
  /// by the single-use observation policy.
  std::int64_t last_update_clone = -1;
};

/// Error-state layout: [theta, p, v, ba, bg] for the IMU block, then
/// [theta, p] per clone in window order. dim() = 15 + 6 * clones.
class SlidingWindowState {
 public:
  ImuState imu;
  std::vector<ClonePose> clones;
  MatX P = MatX::Zero(15, 15);

  int dim() const { return 15 + 6 * static_cast<int>(clones.size()); }

  /// Column/row offset of a clone's 6-dim error block.
  int clone_offset(std::size_t index) const {
    return 15 + 6 * static_cast<int>(index);
  }

  /// Window index of the clone with the given id; throws UnknownClone.
  std::size_t clone_index(std::int64_t clone_id) const;
  const ClonePose& clone(std::int64_t clone_id) const;

  /// Stochastic cloning: appends a copy of the current IMU pose and grows P
  /// by the corresponding 6 rows/columns. The new blocks are the (theta, p)
  /// rows of P, so the clone starts perfectly correlated with the IMU pose.
  void augment(std::int64_t new_clone_id, bool is_keyframe = false);

  /// Removes a clone; for a jointly Gaussian state this is marginalization,
  /// i.e. plain deletion of the clone's rows/columns of P.
  void marginalize_clone(std::int64_t clone_id);

  /// x <- x (+) dx: additive for positions, velocity and biases, left
  /// quaternion composition for every attitude. dx must have size dim().
  void apply_correction(const VecX& dx);
};

}  // namespace svio
