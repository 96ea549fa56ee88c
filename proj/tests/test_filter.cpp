#include <doctest.h>

#include <sstream>

#include "svio/filter.hpp"
#include "svio/runner.hpp"
#include "svio/simulator.hpp"
#include "test_support.hpp"

using namespace svio;

namespace {

FilterConfig sim_filter_config(const SimConfig& sim) {
  FilterConfig config;
  config.cameras = sim.cameras.empty() ? SimConfig::default_stereo_rig()
                                       : sim.cameras;
  config.noise = sim.noise;
  config.u = std::max(sim.pixel_sigma, 0.5) / config.cameras.front().fx;
  return config;
}

SimConfig quiet_sim(double duration) {
  SimConfig c;
  c.trajectory = TrajectoryKind::Circle;
  c.duration = duration;
  c.pixel_sigma = 0.0;
  c.noise.sigma_g = 1e-9;
  c.noise.sigma_a = 1e-8;
  c.noise.sigma_bg = 1e-10;
  c.noise.sigma_ba = 1e-9;
  return c;
}

}  // namespace

TEST_CASE("process_imu advances the state clock sample by sample") {
  FilterConfig config;
  config.cameras = SimConfig::default_stereo_rig();
  Filter filter(config);

  ImuState init;
  init.t = 0.0;
  filter.initialize_with(init, 1e-4 * MatX::Identity(15, 15));

  ImuSample s;
  s.acc = Vec3(0, 0, 9.81);
  s.t = 0.005;
  filter.process_imu(s);
  s.t = 0.010;
  filter.process_imu(s);
  CHECK(filter.state().imu.t == doctest::Approx(0.010).epsilon(1e-12));

  // Non-monotonic samples are dropped and counted.
  s.t = 0.002;
  filter.process_imu(s);
  CHECK(filter.dropped_imu_samples() == 1);
  CHECK(filter.state().imu.t == doctest::Approx(0.010).epsilon(1e-12));
}

TEST_CASE("stationary stream drifts less than a nanometer over a second") {
  FilterConfig config;
  config.cameras = SimConfig::default_stereo_rig();
  Filter filter(config);
  ImuState init;
  filter.initialize_with(init, 1e-6 * MatX::Identity(15, 15));

  ImuSample s;
  s.acc = Vec3(0, 0, 9.81);
  for (int k = 1; k <= 200; ++k) {
    s.t = 0.005 * k;
    filter.process_imu(s);
  }
  CHECK(filter.state().imu.p.norm() < 1e-9);
  CHECK(filter.state().imu.v.norm() < 1e-9);
}

TEST_CASE("covariance trace strictly increases during pure propagation") {
  FilterConfig config;
  config.cameras = SimConfig::default_stereo_rig();
  Filter filter(config);
  ImuState init;
  filter.initialize_with(init, 1e-6 * MatX::Identity(15, 15));

  ImuSample s;
  s.acc = Vec3(0, 0, 9.81);
  s.omega = Vec3(0.01, 0.0, 0.02);
  double prev_trace = filter.state().P.trace();
  for (int k = 1; k <= 100; ++k) {
    s.t = 0.005 * k;
    filter.process_imu(s);
    const double trace = filter.state().P.trace();
    CHECK(trace > prev_trace);
    prev_trace = trace;
  }
}

TEST_CASE("gravity-alignment auto-initialization") {
  FilterConfig config;
  config.cameras = SimConfig::default_stereo_rig();
  config.init_imu_samples = 20;
  Filter filter(config);

  // A rig tilted 30 degrees about x measures gravity off-axis.
  const Quat q_true(Eigen::AngleAxisd(M_PI / 6.0, Vec3::UnitX()));
  ImuSample s;
  for (int k = 0; k < 20; ++k) {
    s.t = 0.005 * (k + 1);
    s.acc = q_true.toRotationMatrix().transpose() * Vec3(0, 0, 9.81);
    filter.process_imu(s);
  }
  REQUIRE(filter.initialized());
  // The estimated attitude must map the measured specific force to +z.
  const Vec3 up = filter.state().imu.q * s.acc;
  CHECK((up.normalized() - Vec3::UnitZ()).norm() < 1e-9);
}

TEST_CASE("frame with no tracks augments and maintains the window only") {
  FilterConfig config;
  config.cameras = SimConfig::default_stereo_rig();
  Filter filter(config);
  ImuState init;
  filter.initialize_with(init, 1e-6 * MatX::Identity(15, 15));

  ImuSample s;
  s.acc = Vec3(0, 0, 9.81);
  s.t = 0.005;
  filter.process_imu(s);

  const Vec3 p_before = filter.state().imu.p;
  const FilterReport report = filter.process_frame(0.005, {});
  CHECK(!report.updated);
  CHECK(report.window_size == 1);
  CHECK((filter.state().imu.p - p_before).norm() == 0.0);
}

TEST_CASE("window size never exceeds its budget") {
  SimConfig sim_config = quiet_sim(4.0);
  const SimOutput sim = generate(sim_config);
  FilterConfig config = sim_filter_config(sim.config);
  config.max_keyframe_clones = 2;
  config.max_temporal_clones = 2;

  Filter filter(config);
  const PerturbedInit init = perturb_initialization(
      sim.gt_imu_rate.front(), sim_config.bias_a_true, sim_config.bias_g_true,
      {}, 1);
  filter.initialize_with(init.imu, init.P0);

  int max_window = 0;
  run_streams(filter, sim.imu, sim.frames,
              [&](std::size_t, const FilterReport& r) {
                max_window = std::max(max_window, r.window_size);
                CHECK(r.window_size <= 4);
              });
  CHECK(max_window == 4);

  // Every landmark track references live clones only.
  for (const auto& [id, lm] : filter.landmarks()) {
    for (const Observation& obs : lm.track) {
      CHECK_NOTHROW(filter.state().clone_index(obs.clone_id));
    }
  }
}

TEST_CASE("zero-noise run with perfect init tracks to micrometers") {
  SimConfig sim_config = quiet_sim(10.0);
  const SimOutput sim = generate(sim_config);
  FilterConfig config = sim_filter_config(sim.config);
  config.u = 0.5 / config.cameras.front().fx;

  const RunResult result = run_simulation(sim, config, {}, 3);
  const double final_err =
      (result.estimate.back().p - result.ground_truth.back().p).norm();
  CHECK(final_err < 1e-6);
}

TEST_CASE("select_keyframe rules") {
  SimConfig sim_config = quiet_sim(1.0);
  const SimOutput sim = generate(sim_config);
  FilterConfig config = sim_filter_config(sim.config);
  config.keyframe.parallax_px = 25.0;
  config.keyframe.min_tracked_landmarks = 3;

  Filter filter(config);
  const PerturbedInit init = perturb_initialization(
      sim.gt_imu_rate.front(), sim_config.bias_a_true, sim_config.bias_g_true,
      {}, 1);
  filter.initialize_with(init.imu, init.P0);

  // Bootstrap: with no keyframe in the window, the first frame is one.
  CHECK(filter.select_keyframe(sim.frames.front().tracks));
  filter.process_frame(0.0, sim.frames.front().tracks);

  SUBCASE("identical consecutive frame with many tracks is not a keyframe") {
    CHECK(!filter.select_keyframe(sim.frames.front().tracks));
  }

  SUBCASE("dropping below the tracked-landmark threshold forces a keyframe") {
    std::vector<TrackObservation> few(sim.frames.front().tracks.begin(),
                                      sim.frames.front().tracks.begin() + 2);
    CHECK(filter.select_keyframe(few));
  }

  SUBCASE("unseen landmarks count as untracked") {
    std::vector<TrackObservation> fresh = sim.frames.front().tracks;
    for (TrackObservation& tr : fresh) tr.landmark_id += 100000;
    CHECK(filter.select_keyframe(fresh));
  }

  SUBCASE("parallax exactly at the threshold is inclusive") {
    // Shift every track and replicate the rule's arithmetic to obtain the
    // exact average the filter will compute, then use it as the threshold.
    std::vector<TrackObservation> shifted = sim.frames.front().tracks;
    const double fx = config.cameras.front().fx;
    for (TrackObservation& tr : shifted) tr.z.x() += 25.0 / fx;
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < shifted.size(); ++i) {
      sum += (shifted[i].z - sim.frames.front().tracks[i].z).norm() * fx;
      ++count;
    }
    FilterConfig tie = config;
    tie.keyframe.parallax_px = sum / count;
    Filter tie_filter(tie);
    tie_filter.initialize_with(init.imu, init.P0);
    tie_filter.process_frame(0.0, sim.frames.front().tracks);
    CHECK(tie_filter.select_keyframe(shifted));
  }
}

TEST_CASE("pure rotation beyond the pose gap forces a keyframe") {
  SimConfig sim_config = quiet_sim(1.0);
  const SimOutput sim = generate(sim_config);
  FilterConfig config = sim_filter_config(sim.config);
  config.keyframe.max_rotation_gap = 0.3;
  config.keyframe.min_tracked_landmarks = 0;
  config.keyframe.parallax_px = 1e9;  // disable rule 1

  Filter filter(config);
  const PerturbedInit init = perturb_initialization(
      sim.gt_imu_rate.front(), sim_config.bias_a_true, sim_config.bias_g_true,
      {}, 1);
  filter.initialize_with(init.imu, init.P0);
  filter.process_frame(0.0, sim.frames.front().tracks);
  CHECK(!filter.select_keyframe(sim.frames.front().tracks));

  // Physically rotate 0.6 rad about z; gravity stays on the body z axis.
  ImuSample s;
  s.omega = Vec3(0.0, 0.0, 1.0);
  for (int k = 1; k <= 120; ++k) {
    s.t = 0.005 * k;
    s.acc = filter.state().imu.q.toRotationMatrix().transpose() *
            Vec3(0, 0, 9.81);
    filter.process_imu(s);
  }
  CHECK(filter.select_keyframe(sim.frames.front().tracks));
}

TEST_CASE("end-to-end determinism: identical runs produce identical bytes") {
  SimConfig sim_config = quiet_sim(3.0);
  sim_config.pixel_sigma = 1.0;
  const SimOutput sim = generate(sim_config);
  FilterConfig config = sim_filter_config(sim.config);

  const RunResult a = run_simulation(sim, config, {}, 11);
  const RunResult b = run_simulation(sim, config, {}, 11);
  REQUIRE(a.estimate.size() == b.estimate.size());
  for (std::size_t i = 0; i < a.estimate.size(); ++i) {
    CHECK(a.estimate[i].p == b.estimate[i].p);
    CHECK(a.estimate[i].q.coeffs() == b.estimate[i].q.coeffs());
  }
}

TEST_CASE("landmark updates never touch the pose covariance") {
  SimConfig sim_config = quiet_sim(2.0);
  sim_config.pixel_sigma = 0.5;
  const SimOutput sim = generate(sim_config);
  FilterConfig config = sim_filter_config(sim.config);
  config.landmark_solver = LandmarkSolverKind::Ekf;

  // The EKF- and GN-solved runs share the pose path frame by frame only if
  // landmark estimates stay identical, which they do not; instead verify the
  // structural invariant directly: P has fixed dimension 15 + 6N and no
  // landmark block ever enters it.
  Filter filter(config);
  const PerturbedInit init = perturb_initialization(
      sim.gt_imu_rate.front(), sim_config.bias_a_true, sim_config.bias_g_true,
      {}, 2);
  filter.initialize_with(init.imu, init.P0);
  run_streams(filter, sim.imu, sim.frames,
              [&](std::size_t, const FilterReport& r) {
                CHECK(filter.state().P.rows() ==
                      15 + 6 * static_cast<int>(filter.state().clones.size()));
                CHECK(r.window_size ==
                      static_cast<int>(filter.state().clones.size()));
              });
  CHECK(!filter.landmarks().empty());
}
