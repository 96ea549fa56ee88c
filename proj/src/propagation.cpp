#include "svio/propagation.hpp"

#include <cmath>

namespace svio {

namespace {

/// Exact attitude increment for a constant body rate over dt:
/// q(t0 + dt) = q(t0) (x) exp(omega dt / 2).
Quat rotate_by(const Quat& q, const Vec3& omega, double dt) {
  const Vec3 half = 0.5 * omega * dt;
  const double angle = half.norm();
  Quat dq;
  if (angle < 1e-12) {
    dq = Quat(1.0, half.x(), half.y(), half.z());
  } else {
    const double s = std::sin(angle) / angle;
    dq = Quat(std::cos(angle), half.x() * s, half.y() * s, half.z() * s);
  }
  return (q * dq).normalized();
}

}  // namespace

ImuState propagate_nominal(const ImuState& state, const ImuSample& sample,
                           double dt, const NoiseParams& noise) {
  if (!(dt > 0.0) || dt >= 0.1) {
    throw InvalidDt("dt must be in (0, 0.1), got " + std::to_string(dt));
  }
  const Vec3 omega = sample.omega - state.bg;
  const Vec3 acc = sample.acc - state.ba;
  const Vec3& g = noise.gravity;

  // The rotational subflow is exact under the zero-order hold, so RK4 is only
  // needed for v and p, with the stage rotations evaluated exactly.
  const Quat q_half = rotate_by(state.q, omega, 0.5 * dt);
  const Quat q_full = rotate_by(state.q, omega, dt);

  const Vec3 k1_dv = state.q * acc + g;
  const Vec3 k1_dp = state.v;

  const Vec3 k2_dv = q_half * acc + g;
  const Vec3 k2_dp = state.v + 0.5 * dt * k1_dv;

  const Vec3 k3_dv = k2_dv;
  const Vec3 k3_dp = state.v + 0.5 * dt * k2_dv;

  const Vec3 k4_dv = q_full * acc + g;
  const Vec3 k4_dp = state.v + dt * k3_dv;

  ImuState out = state;
  out.q = q_full;
  out.p += dt / 6.0 * (k1_dp + 2.0 * k2_dp + 2.0 * k3_dp + k4_dp);
  out.v += dt / 6.0 * (k1_dv + 2.0 * k2_dv + 2.0 * k3_dv + k4_dv);
  out.t += dt;
  return out;
}

Mat15 transition_matrix(const ImuState& state, const ImuSample& sample,
                        double dt) {
  if (!(dt > 0.0)) throw InvalidDt("dt must be positive");
  const Mat3 rot = state.q.toRotationMatrix();
  const Vec3 acc = sample.acc - state.ba;

  Mat15 f = Mat15::Zero();
  f.block<3, 3>(0, 12) = -rot;                    // theta <- bg
  f.block<3, 3>(3, 6) = Mat3::Identity();         // p <- v
  f.block<3, 3>(6, 0) = -skew(rot * acc);         // v <- theta
  f.block<3, 3>(6, 9) = -rot;                     // v <- ba

  const Mat15 fdt = f * dt;
  const Mat15 fdt2 = fdt * fdt;
  // F is nilpotent (F^4 = 0), so this truncated series is the exact
  // exponential of F dt.
  return Mat15::Identity() + fdt + 0.5 * fdt2 + (1.0 / 6.0) * fdt2 * fdt;
}

Mat15 discrete_noise(const ImuState& state, const ImuSample& sample,
                     const Mat15& phi, double dt, const NoiseParams& noise) {
  const Mat3 rot = state.q.toRotationMatrix();
  (void)sample;

  // Noise vector order: [n_a, n_aw, n_g, n_gw].
  Eigen::Matrix<double, 15, 12> g = Eigen::Matrix<double, 15, 12>::Zero();
  g.block<3, 3>(0, 6) = -rot;              // theta <- n_g
  g.block<3, 3>(6, 0) = -rot;              // v <- n_a
  g.block<3, 3>(9, 3) = Mat3::Identity();  // ba <- n_aw
  g.block<3, 3>(12, 9) = Mat3::Identity(); // bg <- n_gw

  Eigen::Matrix<double, 12, 12> qi = Eigen::Matrix<double, 12, 12>::Zero();
  qi.block<3, 3>(0, 0) = Mat3::Identity() * noise.sigma_a * noise.sigma_a;
  qi.block<3, 3>(3, 3) = Mat3::Identity() * noise.sigma_ba * noise.sigma_ba;
  qi.block<3, 3>(6, 6) = Mat3::Identity() * noise.sigma_g * noise.sigma_g;
  qi.block<3, 3>(9, 9) = Mat3::Identity() * noise.sigma_bg * noise.sigma_bg;

  Mat15 qd = phi * g * qi * g.transpose() * phi.transpose() * dt;
  return 0.5 * (qd + qd.transpose());
}

void propagate_covariance(SlidingWindowState& state, const Mat15& phi,
                          const Mat15& qd) {
  MatX& P = state.P;
  if (P.rows() != state.dim()) {
    throw DimensionMismatch("covariance does not match state dimension");
  }
  const int n_aug = state.dim() - 15;
  P.topLeftCorner<15, 15>() =
      phi * P.topLeftCorner<15, 15>() * phi.transpose() + qd;
  if (n_aug > 0) {
    P.topRightCorner(15, n_aug) = phi * P.topRightCorner(15, n_aug);
    P.bottomLeftCorner(n_aug, 15) = P.bottomLeftCorner(n_aug, 15) * phi.transpose();
  }
  symmetrize(P);
}

}  // namespace svio
