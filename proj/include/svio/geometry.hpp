#pragma once

#include <optional>

#include "svio/core.hpp"

namespace svio {

/// Depth guard for the 1/Z^2 singularity of the projection Jacobian.
inline constexpr double kEpsilonDepth = 1e-6;

/// Skew-symmetric matrix such that skew(v) * w == v.cross(w).
inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Compose a small attitude error onto a nominal quaternion.
///
/// The error is global-frame (left) multiplicative throughout this codebase:
/// q = dq (x) q_hat with dq = [1, theta/2], renormalized. Equivalently, to
/// first order, R(q) = (I + skew(theta)) R(q_hat). Many filters use the
/// local-frame (right) convention instead; everything here -- propagation,
/// measurement Jacobians, corrections -- assumes this one.
inline Quat quat_error_compose(const Vec3& delta_theta, const Quat& q_hat) {
  const Quat dq(1.0, 0.5 * delta_theta.x(), 0.5 * delta_theta.y(),
                0.5 * delta_theta.z());
  return (dq * q_hat).normalized();
}

/// Pinhole camera: intrinsics in pixels plus the IMU-to-camera extrinsics.
/// R_ic rotates camera-frame vectors into the IMU frame; p_ic is the camera
/// center expressed in the IMU frame.
struct PinholeCamera {
  double fx = 458.0;
  double fy = 458.0;
  double cx = 376.0;
  double cy = 240.0;
  int width = 752;
  int height = 480;
  Mat3 R_ic = Mat3::Identity();
  Vec3 p_ic = Vec3::Zero();

  Vec3 to_camera(const Vec3& p_imu) const {
    return R_ic.transpose() * (p_imu - p_ic);
  }
  Vec3 to_imu(const Vec3& p_cam) const { return R_ic * p_cam + p_ic; }

  Vec2 pixel_from_normalized(const Vec2& xn) const {
    return {fx * xn.x() + cx, fy * xn.y() + cy};
  }
  Vec2 normalized_from_pixel(const Vec2& px) const {
    return {(px.x() - cx) / fx, (px.y() - cy) / fy};
  }
  bool pixel_in_image(const Vec2& px) const {
    return px.x() >= 0.0 && px.x() < width && px.y() >= 0.0 && px.y() < height;
  }
};

/// Normalized-coordinate projection (X/Z, Y/Z). Returns nullopt when the
/// point is at or behind the depth guard; the observation must be discarded.
inline std::optional<Vec2> project(const Vec3& p_cam,
                                   double epsilon_depth = kEpsilonDepth) {
  if (!(p_cam.z() > epsilon_depth)) return std::nullopt;
  return Vec2(p_cam.x() / p_cam.z(), p_cam.y() / p_cam.z());
}

/// Jacobian of project() w.r.t. the camera-frame point:
/// (1/Z^2) [[Z, 0, -X], [0, Z, -Y]].
inline std::optional<Mat23> projection_jacobian(
    const Vec3& p_cam, double epsilon_depth = kEpsilonDepth) {
  if (!(p_cam.z() > epsilon_depth)) return std::nullopt;
  const double inv_z = 1.0 / p_cam.z();
  const double inv_z2 = inv_z * inv_z;
  Mat23 J;
  J << inv_z, 0.0, -p_cam.x() * inv_z2, 0.0, inv_z, -p_cam.y() * inv_z2;
  return J;
}

}  // namespace svio
