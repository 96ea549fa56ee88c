#include "svio/runner.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace svio {

namespace {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

RunResult run_simulation(const SimOutput& sim, const FilterConfig& config,
                         const PerturbSigmas& perturb, std::uint64_t seed) {
  Filter filter(config);
  const PerturbedInit init =
      perturb_initialization(sim.gt_imu_rate.front(), sim.config.bias_a_true,
                             sim.config.bias_g_true, perturb, seed);
  filter.initialize_with(init.imu, init.P0);

  RunResult result;
  result.estimate.reserve(sim.frames.size());
  result.ground_truth.reserve(sim.gt_cam_rate.size());
  for (const GroundTruthPose& g : sim.gt_cam_rate) {
    result.ground_truth.push_back({g.t, g.p, g.q});
  }

  result.reports = run_streams(
      filter, sim.imu, sim.frames,
      [&](std::size_t f, const FilterReport&) {
        const SlidingWindowState& s = filter.state();
        result.estimate.push_back({s.imu.t, s.imu.p, s.imu.q});
        if (f < sim.gt_cam_rate.size()) {
          const GroundTruthPose& g = sim.gt_cam_rate[f];
          result.nees.push_back(pose_nees(s, g.q, g.p));
        }
      });

  result.ate = ate_rmse(result.estimate, result.ground_truth);
  result.final_error_aligned =
      aligned_final_error(result.estimate, result.ground_truth);
  result.mean_nees = mean(result.nees);
  return result;
}

RunResult run_semisynthetic(const EurocData& data, const FilterConfig& config,
                            const SemiSyntheticParams& params) {
  if (data.gt.size() < 10 || data.imu.size() < 10) {
    throw InvalidConfig("dataset too short for a semi-synthetic run");
  }

  // Re-zero the clock; EuRoC timestamps are large enough to chew precision.
  const double t0 = std::max(data.imu.front().t, data.gt.front().t);
  const double t_end =
      std::min({data.imu.back().t, data.gt.back().t, t0 + params.max_duration});

  std::vector<ImuSample> imu;
  for (const ImuSample& s : data.imu) {
    if (s.t < t0 || s.t > t_end) continue;
    ImuSample shifted = s;
    shifted.t -= t0;
    imu.push_back(shifted);
  }

  std::vector<GroundTruthRecord> gt;
  for (const GroundTruthRecord& g : data.gt) {
    if (g.t < t0 || g.t > t_end) continue;
    GroundTruthRecord shifted = g;
    shifted.t -= t0;
    gt.push_back(shifted);
  }

  std::vector<FrameInput> frames;
  std::vector<TrajectoryRecord> gt_at_frames;
  if (!data.frames.empty()) {
    for (const FrameInput& f : data.frames) {
      if (f.t < t0 || f.t > t_end) continue;
      FrameInput shifted = f;
      shifted.t -= t0;
      frames.push_back(shifted);
    }
    std::size_t j = 0;
    for (const FrameInput& f : frames) {
      while (j + 1 < gt.size() && gt[j].t < f.t) ++j;
      gt_at_frames.push_back({gt[j].t, gt[j].p, gt[j].q});
    }
  } else {
    // Synthesize tracks by projecting a seeded landmark field onto the
    // ground-truth poses at roughly 20 Hz.
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Vec3 lo(1e9, 1e9, 1e9), hi(-1e9, -1e9, -1e9);
    for (const GroundTruthRecord& g : gt) {
      lo = lo.cwiseMin(g.p);
      hi = hi.cwiseMax(g.p);
    }
    const Vec3 margin = 0.5 * (hi - lo) + Vec3(6.0, 6.0, 3.0);
    std::map<std::int64_t, Vec3> field;
    for (int i = 0; i < params.num_landmarks; ++i) {
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        p(k) = lo(k) - margin(k) + (hi(k) - lo(k) + 2.0 * margin(k)) * unif(rng);
      }
      field.emplace(i, p);
    }

    const double frame_dt = 0.05;
    double next_frame = gt.front().t;
    for (const GroundTruthRecord& g : gt) {
      if (g.t + 1e-9 < next_frame) continue;
      next_frame = g.t + frame_dt;
      FrameInput frame;
      frame.t = g.t;
      const Mat3 r_gi = g.q.toRotationMatrix();
      for (const auto& [id, p_world] : field) {
        for (std::size_t ci = 0; ci < config.cameras.size(); ++ci) {
          const PinholeCamera& cam = config.cameras[ci];
          const Vec3 p_cam = cam.to_camera(r_gi.transpose() * (p_world - g.p));
          if (p_cam.z() < 0.2) continue;
          const auto z = project(p_cam);
          if (!z) continue;
          const Vec2 px = cam.pixel_from_normalized(*z);
          if (!cam.pixel_in_image(px)) continue;
          Vec2 noise = params.pixel_sigma * Vec2(gauss(rng), gauss(rng));
          if (noise.norm() > 4.0 * params.pixel_sigma && noise.norm() > 0.0) {
            noise *= 4.0 * params.pixel_sigma / noise.norm();
          }
          TrackObservation tr;
          tr.landmark_id = id;
          tr.camera = static_cast<int>(ci);
          tr.z = cam.normalized_from_pixel(px + noise);
          frame.tracks.push_back(tr);
        }
      }
      gt_at_frames.push_back({g.t, g.p, g.q});
      frames.push_back(std::move(frame));
    }
  }

  Filter filter(config);
  ImuState init;
  init.t = gt.front().t;
  init.q = gt.front().q;
  init.p = gt.front().p;
  init.v = gt.front().v;
  init.ba = gt.front().ba;
  init.bg = gt.front().bg;
  MatX p0 = MatX::Zero(15, 15);
  const InitSigmas& is = config.init;
  const double vars[5] = {is.theta * is.theta, is.p * is.p, is.v * is.v,
                          is.ba * is.ba, is.bg * is.bg};
  for (int b = 0; b < 5; ++b) {
    p0.block<3, 3>(3 * b, 3 * b) = vars[b] * Mat3::Identity();
  }
  filter.initialize_with(init, p0);

  RunResult result;
  result.ground_truth = gt_at_frames;
  result.reports = run_streams(filter, imu, frames,
                               [&](std::size_t f, const FilterReport&) {
                                 const SlidingWindowState& s = filter.state();
                                 result.estimate.push_back(
                                     {s.imu.t, s.imu.p, s.imu.q});
                                 if (f < gt_at_frames.size()) {
                                   result.nees.push_back(pose_nees(
                                       s, gt_at_frames[f].q, gt_at_frames[f].p));
                                 }
                               });
  result.ate = ate_rmse(result.estimate, result.ground_truth);
  result.final_error_aligned =
      aligned_final_error(result.estimate, result.ground_truth);
  result.mean_nees = mean(result.nees);
  return result;
}

}  // namespace svio
