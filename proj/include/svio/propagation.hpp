#pragma once

#include "svio/core.hpp"
#include "svio/state.hpp"

namespace svio {

/// One IMU measurement: angular rate and specific force, bias and noise
/// included, valid from t until the next sample (zero-order hold).
struct ImuSample {
  double t = 0.0;
  Vec3 omega = Vec3::Zero();
  Vec3 acc = Vec3::Zero();
};

/// Continuous-time IMU noise densities and gravity.
struct NoiseParams {
  double sigma_g = 1.7e-4;   // gyro white noise, rad/s/sqrt(Hz)
  double sigma_a = 2.0e-3;   // accel white noise, m/s^2/sqrt(Hz)
  double sigma_bg = 2.0e-5;  // gyro bias random walk, rad/s^2/sqrt(Hz)
  double sigma_ba = 3.0e-3;  // accel bias random walk, m/s^3/sqrt(Hz)
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

/// Integrates the nominal state over dt holding the sample constant.
/// The attitude uses the exact constant-rate quaternion increment; velocity
/// and position use RK4 with the rotation evaluated at the stage times.
ImuState propagate_nominal(const ImuState& state, const ImuSample& sample,
                           double dt, const NoiseParams& noise);

/// Discrete error-state transition, the series I + F dt + F^2 dt^2/2 +
/// F^3 dt^3/6. F is nilpotent (F^4 = 0) so the series equals the exact
/// matrix exponential of F dt.
Mat15 transition_matrix(const ImuState& state, const ImuSample& sample,
                        double dt);

/// Discrete process noise Phi G Q_I G^T Phi^T dt, with the noise vector
/// ordered [n_a, n_aw, n_g, n_gw].
Mat15 discrete_noise(const ImuState& state, const ImuSample& sample,
                     const Mat15& phi, double dt, const NoiseParams& noise);

/// P_II <- Phi P_II Phi^T + Qd, P_IA <- Phi P_IA; clone-clone covariance is
/// untouched. Symmetrizes the result.
void propagate_covariance(SlidingWindowState& state, const Mat15& phi,
                          const Mat15& qd);

}  // namespace svio
