#include <doctest.h>

#include "svio/evalio.hpp"
#include "svio/propagation.hpp"
#include "svio/simulator.hpp"
#include "test_support.hpp"

using namespace svio;

namespace {

SimConfig zero_noise_config(TrajectoryKind kind, double duration) {
  SimConfig c;
  c.trajectory = kind;
  c.duration = duration;
  c.pixel_sigma = 0.0;
  c.noise.sigma_g = 1e-12;  // keep densities positive but negligible
  c.noise.sigma_a = 1e-12;
  c.noise.sigma_bg = 1e-12;
  c.noise.sigma_ba = 1e-12;
  return c;
}

SimConfig strip_noise(SimConfig c) {
  c.pixel_sigma = 0.0;
  c.noise.sigma_g = c.noise.sigma_a = 1e-12;
  c.noise.sigma_bg = c.noise.sigma_ba = 1e-12;
  return c;
}

}  // namespace

TEST_CASE("invalid configs are rejected") {
  SimConfig c;
  c.imu_rate = 10.0;
  c.cam_rate = 20.0;
  CHECK_THROWS_AS(generate(c), InvalidConfig);
  c = SimConfig{};
  c.duration = -1.0;
  CHECK_THROWS_AS(generate(c), InvalidConfig);
  c = SimConfig{};
  c.num_landmarks = 0;
  CHECK_THROWS_AS(generate(c), InvalidConfig);
}

TEST_CASE("stationary zero-noise stream is exactly hover") {
  const SimOutput sim = generate(zero_noise_config(TrajectoryKind::Stationary, 2.0));
  for (const ImuSample& s : sim.imu) {
    CHECK(s.omega.norm() < 1e-9);
    CHECK((s.acc - Vec3(0, 0, 9.81)).norm() < 1e-9);
  }
  for (const GroundTruthPose& g : sim.gt_imu_rate) {
    CHECK((g.p - sim.gt_imu_rate.front().p).norm() == 0.0);
    CHECK(g.v.norm() == 0.0);
  }
}

TEST_CASE("circle kinematics: centripetal magnitude is omega^2 r") {
  SimConfig c = zero_noise_config(TrajectoryKind::Circle, 2.0);
  c.radius = 5.0;
  c.angular_rate = 0.2;
  const SimOutput sim = generate(c);
  for (std::size_t k = 0; k < sim.imu.size(); k += 37) {
    const GroundTruthPose& g = sim.gt_imu_rate[k];
    // Specific force minus the gravity reaction leaves the centripetal part.
    const Vec3 centripetal =
        sim.imu[k].acc + g.q.toRotationMatrix().transpose() * c.noise.gravity;
    CHECK(centripetal.norm() == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(sim.imu[k].omega.norm() == doctest::Approx(0.2).epsilon(1e-6));
  }
}

TEST_CASE("zero-noise integration reproduces ground truth over 60 s") {
  SimConfig c = zero_noise_config(TrajectoryKind::Circle, 60.0);
  c.radius = 5.0;
  c.angular_rate = 0.4;
  const SimOutput sim = generate(c);

  ImuState s;
  s.q = sim.gt_imu_rate.front().q;
  s.p = sim.gt_imu_rate.front().p;
  s.v = sim.gt_imu_rate.front().v;
  s.t = sim.imu.front().t;
  for (std::size_t k = 0; k + 1 < sim.imu.size(); ++k) {
    const double dt = sim.imu[k + 1].t - sim.imu[k].t;
    s = propagate_nominal(s, sim.imu[k], dt, c.noise);
  }
  const GroundTruthPose& end = sim.gt_imu_rate.back();
  CHECK((s.p - end.p).norm() < 1e-6);
  CHECK(s.q.angularDistance(end.q) < 1e-7);
}

TEST_CASE("finite differences of ground truth match the emitted rates") {
  SimConfig c = zero_noise_config(TrajectoryKind::Sine3d, 4.0);
  const SimOutput sim = generate(c);
  const double dt = 1.0 / c.imu_rate;
  double worst_v = 0.0, worst_w = 0.0;
  for (std::size_t k = 1; k + 1 < sim.gt_imu_rate.size(); k += 11) {
    const GroundTruthPose& prev = sim.gt_imu_rate[k - 1];
    const GroundTruthPose& cur = sim.gt_imu_rate[k];
    const GroundTruthPose& next = sim.gt_imu_rate[k + 1];

    const Vec3 v_fd = (next.p - prev.p) / (2.0 * dt);
    worst_v = std::max(worst_v, (v_fd - cur.v).norm());

    // Central rotational rate: log of q_prev^-1 q_next over 2dt, body frame.
    const Quat dq = prev.q.conjugate() * next.q;
    const Eigen::AngleAxisd aa(dq);
    const Vec3 w_fd = aa.axis() * aa.angle() / (2.0 * dt);
    worst_w = std::max(worst_w, (w_fd - cur.omega_body).norm());
  }
  CHECK(worst_v < 10.0 * dt * dt);   // O(dt^2)
  CHECK(worst_w < 10.0 * dt * dt);
}

TEST_CASE("every emitted observation reprojects within 4 sigma") {
  SimConfig c;
  c.trajectory = TrajectoryKind::Circle;
  c.duration = 3.0;
  c.pixel_sigma = 1.5;
  const SimOutput sim = generate(c);

  std::size_t frame_idx = 0;
  std::size_t checked = 0;
  for (const FrameInput& frame : sim.frames) {
    const GroundTruthPose& g = sim.gt_cam_rate[frame_idx++];
    for (const TrackObservation& tr : frame.tracks) {
      const PinholeCamera& cam = sim.config.cameras[static_cast<std::size_t>(tr.camera)];
      const Vec3 p_cam = cam.to_camera(g.q.toRotationMatrix().transpose() *
                                       (sim.landmarks.at(tr.landmark_id) - g.p));
      const auto z_true = project(p_cam);
      REQUIRE(z_true.has_value());
      const Vec2 err_px =
          cam.pixel_from_normalized(tr.z) - cam.pixel_from_normalized(*z_true);
      CHECK(err_px.norm() <= 4.0 * c.pixel_sigma + 1e-9);
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("same seed gives identical output, different seed differs") {
  SimConfig c;
  c.duration = 2.0;
  c.pixel_sigma = 1.0;
  const SimOutput a = generate(c);
  const SimOutput b = generate(c);
  REQUIRE(a.imu.size() == b.imu.size());
  for (std::size_t k = 0; k < a.imu.size(); k += 97) {
    CHECK((a.imu[k].omega - b.imu[k].omega).norm() == 0.0);
    CHECK((a.imu[k].acc - b.imu[k].acc).norm() == 0.0);
  }
  c.seed = 999;
  const SimOutput d = generate(c);
  bool any_diff = false;
  for (std::size_t k = 0; k < a.imu.size() && !any_diff; ++k) {
    any_diff = (a.imu[k].omega - d.imu[k].omega).norm() > 0.0;
  }
  CHECK(any_diff);
}

TEST_CASE("perturb_initialization") {
  SimConfig c = zero_noise_config(TrajectoryKind::Circle, 1.0);
  const SimOutput sim = generate(c);

  SUBCASE("zero sigmas give the exact truth with a floored covariance") {
    const PerturbedInit init = perturb_initialization(
        sim.gt_imu_rate.front(), c.bias_a_true, c.bias_g_true, {}, 5);
    CHECK((init.imu.p - sim.gt_imu_rate.front().p).norm() == 0.0);
    CHECK(init.imu.q.angularDistance(sim.gt_imu_rate.front().q) < 1e-15);
    CHECK(init.P0.diagonal().minCoeff() == doctest::Approx(1e-12));
  }

  SUBCASE("deterministic under a fixed seed") {
    PerturbSigmas sig;
    sig.theta = 0.02;
    sig.p = 0.05;
    const PerturbedInit a = perturb_initialization(
        sim.gt_imu_rate.front(), c.bias_a_true, c.bias_g_true, sig, 7);
    const PerturbedInit b = perturb_initialization(
        sim.gt_imu_rate.front(), c.bias_a_true, c.bias_g_true, sig, 7);
    CHECK((a.imu.p - b.imu.p).norm() == 0.0);
    CHECK(a.imu.q.coeffs() == b.imu.q.coeffs());
  }

  SUBCASE("initial NEES averages to the state dimension") {
    PerturbSigmas sig;
    sig.theta = 1e-2;
    sig.p = 5e-2;
    sig.v = 1e-2;
    sig.ba = 1e-3;
    sig.bg = 1e-4;
    const GroundTruthPose& truth = sim.gt_imu_rate.front();
    double nees_sum = 0.0;
    const int n = 500;
    for (int seed = 0; seed < n; ++seed) {
      const PerturbedInit init = perturb_initialization(
          truth, c.bias_a_true, c.bias_g_true, sig,
          static_cast<std::uint64_t>(seed));
      Eigen::Matrix<double, 15, 1> e;
      const Quat dq = truth.q * init.imu.q.conjugate();
      Vec3 dtheta = 2.0 * dq.vec();
      if (dq.w() < 0.0) dtheta = -dtheta;
      e << dtheta, truth.p - init.imu.p, truth.v - init.imu.v,
          c.bias_a_true - init.imu.ba, c.bias_g_true - init.imu.bg;
      nees_sum += e.dot(init.P0.ldlt().solve(e));
    }
    const double avg = nees_sum / n;
    // chi^2(15): mean 15, std sqrt(30); the sample mean over 500 draws has
    // std ~0.24, so a +-1 band is a ~4 sigma test.
    CHECK(avg > 14.0);
    CHECK(avg < 16.0);
  }
}

TEST_CASE("simulation persists to the EuRoC layout and reads back") {
  SimConfig c = strip_noise(SimConfig{});
  c.duration = 1.0;
  const SimOutput sim = generate(c);

  const std::string dir = "sim_roundtrip_tmp";
  write_euroc_layout(sim, dir);
  const EurocData data = read_euroc_layout(dir, sim.config.cameras);

  REQUIRE(data.imu.size() == sim.imu.size());
  for (std::size_t k = 0; k < data.imu.size(); k += 13) {
    CHECK(std::abs(data.imu[k].t - sim.imu[k].t) < 1e-9);
    CHECK((data.imu[k].omega - sim.imu[k].omega).norm() < 1e-8);
    CHECK((data.imu[k].acc - sim.imu[k].acc).norm() < 1e-8);
  }
  REQUIRE(data.frames.size() == sim.frames.size());
  for (std::size_t f = 0; f < data.frames.size(); f += 7) {
    REQUIRE(data.frames[f].tracks.size() == sim.frames[f].tracks.size());
    for (std::size_t i = 0; i < data.frames[f].tracks.size(); i += 5) {
      CHECK(data.frames[f].tracks[i].landmark_id ==
            sim.frames[f].tracks[i].landmark_id);
      CHECK((data.frames[f].tracks[i].z - sim.frames[f].tracks[i].z).norm() <
            1e-8);
    }
  }
}
