#pragma once

#include <cstdint>
#include <vector>

#include "svio/measurement.hpp"
#include "svio/state.hpp"

namespace svio {

/// Per-landmark slice of the equivalent residual model. c1/b1 contributions
/// are kept sparse (the landmark only touches the clone blocks it was
/// observed from) so a landmark can be removed from the system cheaply.
struct SchurLandmark {
  std::int64_t id = -1;
  Vec3 b2 = Vec3::Zero();
  MatX C2;       // dim_x x 3
  Mat3 C3 = Mat3::Zero();
  std::vector<std::pair<int, Mat6>> c1_blocks;  // (clone block offset, 6x6)
  std::vector<std::pair<int, Vec6>> b1_blocks;
};

/// Gradient/Hessian form of the stacked model:
///   [b1; b2] = [C1 C2; C2^T C3] [x_err; p_f_err] + n'
/// with b1 = Jx^T r, b2 = Jf^T r, C1 = Jx^T Jx, C2 = Jx^T Jf, C3 = Jf^T Jf
/// and noise covariance [C1 C2; C2^T C3] u^2. C3 is block-diagonal with one
/// 3x3 block per landmark, which is what the whole method exploits.
struct SchurSystem {
  int dim_x = 0;
  double u = 1.0;
  VecX b1;
  MatX C1;
  std::vector<SchurLandmark> landmarks;
};

/// Builds the equivalent system blockwise from the per-landmark rows; the
/// dense Jf is never materialized. Throws EmptyModel on a model with no rows.
SchurSystem build_equivalent(const StackedResidualModel& model,
                             ExecPolicy policy = ExecPolicy::Serial);

/// The pose-only residual model after marginalizing the landmarks:
///   b_s = (C1 - C2 C3^{-1} C2^T) x_err + n1''
/// with S = C1 - C2 C3^{-1} C2^T and noise covariance R1 = S u^2.
struct PoseResidualModel {
  int dim_x = 0;
  double u = 1.0;
  VecX b_s;
  MatX S;

  MatX R1() const { return S * (u * u); }
};

struct SchurOutcome {
  PoseResidualModel prm;
  /// Landmarks whose C3 block failed the eigenvalue guard; they were removed
  /// from the system (all their contributions, C1/b1 included) before
  /// marginalization.
  std::vector<std::int64_t> removed;
};

/// Marginalizes landmark-by-landmark with rank-3 downdates
/// S -= C2_i C3_i^{-1} C2_i^T, b_s -= C2_i C3_i^{-1} b2_i.
/// A landmark whose C3 block has min eigenvalue <= c3_eps is removed and the
/// marginalization proceeds without it.
SchurOutcome schur_marginalize(const SchurSystem& sys, double c3_eps = 1e-9,
                               ExecPolicy policy = ExecPolicy::Serial);

struct PoseUpdateResult {
  bool ok = false;
  VecX dx;
};

/// EKF update of the sliding-window state with the pose residual model:
/// K from Eq. (gain) with J := S and R := S u^2, dx = K b_s, Joseph-form
/// covariance update, then the multiplicative state correction.
///
/// The innovation S P S^T + S u^2 factors as S (P S + u^2 I); the gain is
/// obtained from the right factor, which is invertible for any PSD P and S
/// (its eigenvalues are bounded below by u^2), so rank-deficient S -- the
/// normal case when few landmarks are visible -- needs no special handling.
/// On a failed solve (non-finite result) the update is skipped and
/// ok = false is returned.
PoseUpdateResult ekf_update_pose(SlidingWindowState& state,
                                 const PoseResidualModel& prm);

}  // namespace svio
