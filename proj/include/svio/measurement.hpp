#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "svio/core.hpp"
#include "svio/geometry.hpp"
#include "svio/state.hpp"

namespace svio {

/// Residual and Jacobians of one reprojection observation: r = z - z_hat,
/// J_clone w.r.t. the observing clone's (theta, p) error, J_f w.r.t. the
/// landmark position error.
struct ResidualJacobians {
  Vec2 r = Vec2::Zero();
  Mat26 J_clone = Mat26::Zero();
  Mat23 J_f = Mat23::Zero();
};

/// Computes the per-observation residual model. Returns nullopt when the
/// landmark falls at or behind the camera's depth guard.
std::optional<ResidualJacobians> residual_and_jacobians(
    const Observation& obs, const SlidingWindowState& state,
    const Landmark& lm, const PinholeCamera& cam);

/// Rows of one landmark inside the stacked model. Jx support is restricted
/// to the observed clones' columns; Jf is this landmark's dense block.
struct LandmarkRows {
  std::int64_t landmark_id = -1;
  int row_start = 0;
  MatX Jf;  // rows x 3
  std::vector<Observation> used;
};

/// The full stacked residual model r = [Jx Jf] [x_err; p_f_err] + n with
/// isotropic noise std u in normalized image units. Jf is kept blockwise
/// (one block per landmark); Jx is stored dense with its structural zeros.
struct StackedResidualModel {
  int dim_x = 0;
  double u = 1.0;
  VecX r;
  MatX Jx;
  std::vector<LandmarkRows> landmarks;

  int rows() const { return static_cast<int>(r.size()); }
  int num_landmarks() const { return static_cast<int>(landmarks.size()); }
};

struct GatingParams {
  bool enabled = false;
  double chi2_gate = 5.991464547107979;  // 95%, 2 dof
};

struct StackReport {
  std::vector<std::int64_t> insufficient_track;
  int behind_camera = 0;
  int gated = 0;
};

/// Stacks all usable observations into the full residual model. Observations
/// are assembled in (landmark id, clone id, camera) order so the output is
/// identical for any input ordering. Landmarks that end up with fewer than
/// two observations from two distinct clones are skipped and reported.
/// Gating (when enabled) tests each observation's Mahalanobis distance under
/// its marginal innovation J P J^T + u^2 I, including the landmark's own P.
StackedResidualModel stack(std::span<const Observation> observations,
                           const SlidingWindowState& state,
                           const std::map<std::int64_t, Landmark>& landmarks,
                           const std::vector<PinholeCamera>& cameras,
                           double u, const GatingParams& gating,
                           StackReport* report = nullptr,
                           ExecPolicy policy = ExecPolicy::Serial);

enum class TriangulationStatus { Ok, LowParallax, IllConditioned };

struct TriangulationResult {
  TriangulationStatus status = TriangulationStatus::Ok;
  Vec3 p_global = Vec3::Zero();
  Mat3 P0 = Mat3::Zero();

  bool ok() const { return status == TriangulationStatus::Ok; }
};

struct TriangulationParams {
  double min_parallax_deg = 1.0;
  double max_condition = 1e8;
  int max_gn_iterations = 5;
};

/// DLT initialization followed by a few Gauss-Newton steps on the
/// reprojection error. P0 = u^2 (Jf^T Jf)^{-1} at the solution.
TriangulationResult triangulate(std::span<const Observation> track,
                                const SlidingWindowState& state,
                                const std::vector<PinholeCamera>& cameras,
                                double u,
                                const TriangulationParams& params = {});

}  // namespace svio
