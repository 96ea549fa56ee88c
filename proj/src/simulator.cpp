#include "svio/simulator.hpp"

#include <cmath>
#include <random>

namespace svio {

namespace {

struct TrajectorySample {
  Quat q;
  Vec3 p;
  Vec3 v;
  Vec3 a_world;
  Vec3 omega_body;
};

Quat yaw_quat(double yaw) {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

/// Closed-form trajectory evaluation. Orientation is yaw-following (body x
/// along the direction of travel), so the body rate is (0, 0, yaw_dot).
TrajectorySample eval_trajectory(const SimConfig& c, double t) {
  TrajectorySample s;
  switch (c.trajectory) {
    case TrajectoryKind::Stationary: {
      s.q = Quat::Identity();
      s.p = Vec3(0.0, 0.0, 1.0);
      s.v = Vec3::Zero();
      s.a_world = Vec3::Zero();
      s.omega_body = Vec3::Zero();
      break;
    }
    case TrajectoryKind::Circle: {
      const double w = c.angular_rate;
      const double th = w * t;
      s.p = Vec3(c.radius * std::cos(th), c.radius * std::sin(th), 1.0);
      s.v = Vec3(-c.radius * w * std::sin(th), c.radius * w * std::cos(th), 0.0);
      s.a_world = Vec3(-c.radius * w * w * std::cos(th),
                       -c.radius * w * w * std::sin(th), 0.0);
      s.q = yaw_quat(th + M_PI / 2.0);
      s.omega_body = Vec3(0.0, 0.0, w);
      break;
    }
    case TrajectoryKind::Sine3d: {
      const double w = c.angular_rate;
      const double th = w * t;
      const double wz = c.z_rate;
      s.p = Vec3(c.radius * std::cos(th), c.radius * std::sin(th),
                 1.0 + c.z_amplitude * std::sin(wz * t));
      s.v = Vec3(-c.radius * w * std::sin(th), c.radius * w * std::cos(th),
                 c.z_amplitude * wz * std::cos(wz * t));
      s.a_world = Vec3(-c.radius * w * w * std::cos(th),
                       -c.radius * w * w * std::sin(th),
                       -c.z_amplitude * wz * wz * std::sin(wz * t));
      s.q = yaw_quat(th + M_PI / 2.0);
      s.omega_body = Vec3(0.0, 0.0, w);
      break;
    }
  }
  return s;
}

GroundTruthPose to_gt(const TrajectorySample& s, const SimConfig& c, double t) {
  GroundTruthPose gt;
  gt.t = t;
  gt.q = s.q;
  gt.p = s.p;
  gt.v = s.v;
  gt.omega_body = s.omega_body;
  gt.acc_body = s.q.toRotationMatrix().transpose() *
                (s.a_world - c.noise.gravity);
  return gt;
}

}  // namespace

std::vector<PinholeCamera> SimConfig::default_stereo_rig() {
  PinholeCamera cam0;
  cam0.R_ic << 0, 0, 1, -1, 0, 0, 0, -1, 0;  // optical axis along body +x
  cam0.p_ic = Vec3(0.01, 0.055, 0.0);
  PinholeCamera cam1 = cam0;
  cam1.p_ic = cam0.p_ic + cam0.R_ic * Vec3(0.11, 0.0, 0.0);
  return {cam0, cam1};
}

SimOutput generate(const SimConfig& config_in) {
  SimConfig config = config_in;
  if (config.cameras.empty()) config.cameras = SimConfig::default_stereo_rig();

  if (!(config.imu_rate > 0.0) || !(config.cam_rate > 0.0) ||
      config.imu_rate < config.cam_rate) {
    throw InvalidConfig("rates must be positive with imu_rate >= cam_rate");
  }
  if (!(config.duration > 0.0)) throw InvalidConfig("duration must be positive");
  if (config.num_landmarks <= 0) throw InvalidConfig("need landmarks");
  if (config.pixel_sigma < 0.0 || config.outlier_rate < 0.0 ||
      config.outlier_rate > 1.0) {
    throw InvalidConfig("bad noise configuration");
  }

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SimOutput out;
  out.config = config;

  // Landmark field.
  for (int i = 0; i < config.num_landmarks; ++i) {
    Vec3 p;
    if (config.field == LandmarkField::Cylinder) {
      const double angle = 2.0 * M_PI * unif(rng);
      const double z = config.field_z_min +
                       (config.field_z_max - config.field_z_min) * unif(rng);
      p = Vec3(config.field_radius * std::cos(angle),
               config.field_radius * std::sin(angle), z);
    } else {
      const double w = config.field_radius;
      p = Vec3(w * (2.0 * unif(rng) - 1.0), w * (2.0 * unif(rng) - 1.0),
               config.field_z_min +
                   (config.field_z_max - config.field_z_min) * unif(rng));
    }
    out.landmarks.emplace(i, p);
  }

  // IMU stream with per-axis bias random walks starting at the configured
  // true biases, plus discretized white noise sigma_c * sqrt(rate).
  const double dt = 1.0 / config.imu_rate;
  const int n_imu = static_cast<int>(std::round(config.duration * config.imu_rate));
  const double wn_g = config.noise.sigma_g * std::sqrt(config.imu_rate);
  const double wn_a = config.noise.sigma_a * std::sqrt(config.imu_rate);
  const double rw_g = config.noise.sigma_bg * std::sqrt(dt);
  const double rw_a = config.noise.sigma_ba * std::sqrt(dt);
  Vec3 bg = config.bias_g_true;
  Vec3 ba = config.bias_a_true;
  auto randn3 = [&] { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };
  for (int k = 0; k <= n_imu; ++k) {
    const double t = k * dt;
    const TrajectorySample s = eval_trajectory(config, t);
    out.gt_imu_rate.push_back(to_gt(s, config, t));

    ImuSample sample;
    sample.t = t;
    sample.omega = out.gt_imu_rate.back().omega_body + bg + wn_g * randn3();
    sample.acc = out.gt_imu_rate.back().acc_body + ba + wn_a * randn3();
    out.imu.push_back(sample);

    bg += rw_g * randn3();
    ba += rw_a * randn3();
  }

  // Camera frames: project the field through each camera, cull by depth and
  // image bounds, then add pixel noise truncated at 4 sigma.
  const int frame_stride =
      static_cast<int>(std::round(config.imu_rate / config.cam_rate));
  for (int k = 0; k <= n_imu; k += frame_stride) {
    const double t = k * dt;
    const GroundTruthPose& gt = out.gt_imu_rate[static_cast<std::size_t>(k)];
    out.gt_cam_rate.push_back(gt);

    FrameInput frame;
    frame.t = t;
    const Mat3 r_gi = gt.q.toRotationMatrix();
    for (const auto& [id, p_world] : out.landmarks) {
      for (std::size_t ci = 0; ci < config.cameras.size(); ++ci) {
        const PinholeCamera& cam = config.cameras[ci];
        const Vec3 p_cam = cam.to_camera(r_gi.transpose() * (p_world - gt.p));
        if (p_cam.z() < config.min_depth) continue;
        const auto z_true = project(p_cam);
        if (!z_true) continue;
        const Vec2 px_true = cam.pixel_from_normalized(*z_true);
        if (!cam.pixel_in_image(px_true)) continue;

        TrackObservation obs;
        obs.landmark_id = id;
        obs.camera = static_cast<int>(ci);
        if (config.outlier_rate > 0.0 && unif(rng) < config.outlier_rate) {
          const Vec2 px(unif(rng) * cam.width, unif(rng) * cam.height);
          obs.z = cam.normalized_from_pixel(px);
        } else {
          Vec2 noise_px = Vec2::Zero();
          if (config.pixel_sigma > 0.0) {
            for (int attempt = 0; attempt < 12; ++attempt) {
              noise_px = config.pixel_sigma * Vec2(gauss(rng), gauss(rng));
              if (noise_px.norm() <= 4.0 * config.pixel_sigma) break;
            }
            if (noise_px.norm() > 4.0 * config.pixel_sigma) {
              noise_px *= 4.0 * config.pixel_sigma / noise_px.norm();
            }
          }
          obs.z = cam.normalized_from_pixel(px_true + noise_px);
        }
        frame.tracks.push_back(obs);
      }
    }
    out.frames.push_back(std::move(frame));
  }
  return out;
}

PerturbedInit perturb_initialization(const GroundTruthPose& truth,
                                     const Vec3& ba_true, const Vec3& bg_true,
                                     const PerturbSigmas& sigmas,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto randn3 = [&] { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };

  PerturbedInit out;
  out.imu.t = truth.t;
  out.imu.q = quat_error_compose(sigmas.theta * randn3(), truth.q);
  out.imu.p = truth.p + sigmas.p * randn3();
  out.imu.v = truth.v + sigmas.v * randn3();
  out.imu.ba = ba_true + sigmas.ba * randn3();
  out.imu.bg = bg_true + sigmas.bg * randn3();

  constexpr double kFloor = 1e-12;
  out.P0 = MatX::Zero(15, 15);
  const double vars[5] = {sigmas.theta * sigmas.theta, sigmas.p * sigmas.p,
                          sigmas.v * sigmas.v, sigmas.ba * sigmas.ba,
                          sigmas.bg * sigmas.bg};
  for (int b = 0; b < 5; ++b) {
    out.P0.block<3, 3>(3 * b, 3 * b) =
        std::max(vars[b], kFloor) * Mat3::Identity();
  }
  return out;
}

}  // namespace svio
