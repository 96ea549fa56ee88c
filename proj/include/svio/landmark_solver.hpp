#pragma once

#include <vector>

#include "svio/schur.hpp"
#include "svio/state.hpp"

namespace svio {

/// One landmark's independent residual model after the pose update:
/// r = b2_i - C2_i^T dx, measurement matrix C3_i, noise C3_i u^2.
struct LandmarkResidual {
  std::int64_t id = -1;
  Vec3 r = Vec3::Zero();
  Mat3 C3 = Mat3::Zero();
  double u = 1.0;
};

/// Splits the (block-diagonal) landmark part of the Schur system into one
/// small residual model per landmark, substituting the pose update dx.
std::vector<LandmarkResidual> split_landmark_system(const SchurSystem& sys,
                                                    const VecX& dx);

enum class LandmarkUpdateStatus { Updated, Rejected };

/// Standard EKF update of a single landmark: gain from the factored
/// innovation (C3 P + u^2 I is always invertible for PSD inputs), Joseph
/// covariance update, additive position correction. Touches nothing but
/// this landmark. Returns Rejected when the innovation solve produces
/// non-finite values.
LandmarkUpdateStatus ekf_update_landmark(Landmark& lm,
                                         const LandmarkResidual& res);

/// Applies all per-landmark updates; the loop parallelizes trivially since
/// the updates are disjoint. Landmarks flagged Rejected keep their prior.
void update_landmarks(std::map<std::int64_t, Landmark>& landmarks,
                      const std::vector<LandmarkResidual>& residuals,
                      ExecPolicy policy = ExecPolicy::Serial);

/// Clamp the eigenvalues of a landmark covariance to [floor_var, cap_var]
/// (m^2); used on the triangulation prior so the innovation stays
/// well-conditioned.
Mat3 clamp_landmark_covariance(const Mat3& P, double floor_var = 1e-6,
                               double cap_var = 1e2);

}  // namespace svio
