#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "svio/filter.hpp"
#include "svio/propagation.hpp"
#include "svio/state.hpp"

namespace svio {

enum class TrajectoryKind { Stationary, Circle, Sine3d };

enum class LandmarkField { Cylinder, Room };

struct SimConfig {
  TrajectoryKind trajectory = TrajectoryKind::Circle;
  double radius = 5.0;        // m
  double angular_rate = 0.4;  // rad/s
  double z_amplitude = 1.0;   // m, sine-3d only
  double z_rate = 0.5;        // rad/s, sine-3d only
  double duration = 20.0;     // s
  double imu_rate = 200.0;    // Hz
  double cam_rate = 20.0;     // Hz

  LandmarkField field = LandmarkField::Cylinder;
  int num_landmarks = 300;
  double field_radius = 9.0;  // cylinder radius / half room width, m
  double field_z_min = -2.0;
  double field_z_max = 4.0;

  NoiseParams noise;
  double pixel_sigma = 0.0;  // px; observation noise, truncated at 4 sigma
  Vec3 bias_g_true = Vec3::Zero();
  Vec3 bias_a_true = Vec3::Zero();
  double outlier_rate = 0.0;  // per-observation probability
  double min_depth = 0.1;     // m, visibility cull

  std::vector<PinholeCamera> cameras;
  std::uint64_t seed = 1;

  /// EuRoC-like stereo rig looking along body +x, baseline along body -y.
  static std::vector<PinholeCamera> default_stereo_rig();
};

struct GroundTruthPose {
  double t = 0.0;
  Quat q = Quat::Identity();
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 omega_body = Vec3::Zero();
  Vec3 acc_body = Vec3::Zero();  // specific force, what an ideal IMU reads
};

struct SimOutput {
  std::vector<ImuSample> imu;
  std::vector<FrameInput> frames;
  std::vector<GroundTruthPose> gt_imu_rate;
  std::vector<GroundTruthPose> gt_cam_rate;
  std::map<std::int64_t, Vec3> landmarks;
  SimConfig config;
};

/// Generates the analytic trajectory, the noisy IMU stream and the per-frame
/// feature tracks. Throws InvalidConfig on bad parameters.
SimOutput generate(const SimConfig& config);

struct PerturbSigmas {
  double theta = 0.0;  // rad
  double p = 0.0;      // m
  double v = 0.0;      // m/s
  double ba = 0.0;
  double bg = 0.0;
};

struct PerturbedInit {
  ImuState imu;
  MatX P0;
};

/// Ground truth plus a seeded Gaussian perturbation, with P0 set to the
/// perturbation variances (floored at 1e-12) so the initial NEES is chi^2
/// distributed with the state dimension as its mean.
PerturbedInit perturb_initialization(const GroundTruthPose& truth,
                                     const Vec3& ba_true, const Vec3& bg_true,
                                     const PerturbSigmas& sigmas,
                                     std::uint64_t seed);

}  // namespace svio
