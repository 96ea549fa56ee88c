#pragma once

#include <functional>
#include <random>

#include "svio/measurement.hpp"
#include "svio/state.hpp"

namespace svio::oracles {

/// Brute-force references used by tests, the verification command and the
/// acceptance suite. These deliberately share nothing with the production
/// update path beyond the geometry primitives and the model containers:
/// everything is recomputed densely, O(rows^3) and proud of it.

struct DenseUpdate {
  VecX dx;
  MatX P_post;
};

/// Reference EKF update obtained by explicit dense marginalization: projects
/// the stacked rows onto the orthogonal complement of range(Jf) (the dense
/// Schur complement of the normal equations), then runs the textbook EKF
/// update with the projected rows and noise u^2 I, Joseph form.
/// Throws SingularSystem when any landmark block is rank-deficient.
DenseUpdate direct_marginalized_update(const StackedResidualModel& model,
                                       const SlidingWindowState& state);

/// Classical left-nullspace (QR) elimination of each landmark block followed
/// by the standard EKF update with noise u^2 I, Joseph form.
DenseUpdate nullspace_update(const StackedResidualModel& model,
                             const SlidingWindowState& state);

/// Gauss-Newton landmark refinement from initial guess p0: iterates
/// dp = (Jf^T Jf)^{-1} Jf^T r until |dp| < 1e-10 m or 20 iterations.
/// Throws SingularSystem (degenerate track) on an ill-conditioned system.
Vec3 gauss_newton_landmark(std::span<const Observation> track,
                           const SlidingWindowState& state,
                           const std::vector<PinholeCamera>& cameras,
                           const Vec3& p0);

/// Central finite differences, per-component step eps * max(1, |x0_i|).
MatX numeric_jacobian(const std::function<VecX(const VecX&)>& f,
                      const VecX& x0, double eps = 1e-6);

/// Dense matrix exponential by scaling-and-squaring with a Taylor series,
/// used as the reference for the truncated transition-matrix series.
MatX expm(const MatX& a);

/// A randomly generated but geometrically consistent measurement instance:
/// a sliding window with correlated covariance, a landmark field, and the
/// stacked model built from noisy synthetic observations.
struct RandomInstance {
  SlidingWindowState state;
  std::map<std::int64_t, Landmark> landmarks;
  std::vector<PinholeCamera> cameras;
  StackedResidualModel model;
};

struct RandomInstanceParams {
  int num_clones = 4;
  int num_landmarks = 10;
  int min_observations = 2;
  int max_observations = 8;
  double u = 1.0 / 458.0;
  /// Fraction of landmarks generated with near-collinear observation rays to
  /// exercise the singular-block guard.
  double degenerate_fraction = 0.0;
};

RandomInstance make_random_instance(std::mt19937_64& rng,
                                    const RandomInstanceParams& params);

/// Removes the given landmarks from a stacked model (used to mirror the
/// production path after it drops singular blocks).
StackedResidualModel remove_landmarks(const StackedResidualModel& model,
                                      const std::vector<std::int64_t>& ids);

}  // namespace svio::oracles
