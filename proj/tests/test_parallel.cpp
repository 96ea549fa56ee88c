#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "svio/oracles.hpp"
#include "svio/schur.hpp"
#include "test_support.hpp"

using namespace svio;

namespace {

oracles::RandomInstance big_instance(std::uint64_t seed) {
  auto rng = test::make_rng(seed);
  oracles::RandomInstanceParams params;
  params.num_clones = 5;
  params.num_landmarks = 40;
  return oracles::make_random_instance(rng, params);
}

}  // namespace

TEST_CASE("OpenMP kernels match the serial reference") {
  for (const std::uint64_t seed : {501ull, 502ull, 503ull}) {
    const oracles::RandomInstance inst = big_instance(seed);

    const SchurSystem serial = build_equivalent(inst.model, ExecPolicy::Serial);
    const SchurSystem parallel =
        build_equivalent(inst.model, ExecPolicy::Parallel);
    // Identical per-landmark arithmetic and a fixed assembly order: the
    // equivalent system is bitwise equal.
    CHECK((serial.C1 - parallel.C1).norm() == 0.0);
    CHECK((serial.b1 - parallel.b1).norm() == 0.0);
    REQUIRE(serial.landmarks.size() == parallel.landmarks.size());
    for (std::size_t j = 0; j < serial.landmarks.size(); ++j) {
      CHECK((serial.landmarks[j].C2 - parallel.landmarks[j].C2).norm() == 0.0);
      CHECK((serial.landmarks[j].C3 - parallel.landmarks[j].C3).norm() == 0.0);
    }

    // The downdate reduction orders differ (left-to-right vs pairwise tree),
    // so agreement is to roundoff, not bitwise.
    const SchurOutcome s = schur_marginalize(serial, 1e-9, ExecPolicy::Serial);
    const SchurOutcome p =
        schur_marginalize(parallel, 1e-9, ExecPolicy::Parallel);
    CHECK(test::rel_err(p.prm.S, s.prm.S) < 1e-13);
    CHECK(test::rel_err(p.prm.b_s, s.prm.b_s) < 1e-13);
  }
}

TEST_CASE("parallel reduction is invariant to the thread count") {
  const oracles::RandomInstance inst = big_instance(601);
  const SchurSystem sys = build_equivalent(inst.model, ExecPolicy::Parallel);

#ifdef _OPENMP
  const int max_threads = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  const SchurOutcome one = schur_marginalize(sys, 1e-9, ExecPolicy::Parallel);
#ifdef _OPENMP
  omp_set_num_threads(std::max(4, max_threads));
#endif
  const SchurOutcome many = schur_marginalize(sys, 1e-9, ExecPolicy::Parallel);
#ifdef _OPENMP
  omp_set_num_threads(max_threads);
#endif

  CHECK((one.prm.S - many.prm.S).norm() == 0.0);
  CHECK((one.prm.b_s - many.prm.b_s).norm() == 0.0);
}

TEST_CASE("parallel landmark updates equal the serial ones bitwise") {
  const oracles::RandomInstance inst = big_instance(701);
  const SchurSystem sys = build_equivalent(inst.model);
  const auto residuals = split_landmark_system(sys, VecX::Zero(sys.dim_x));

  std::map<std::int64_t, Landmark> serial_lms = inst.landmarks;
  std::map<std::int64_t, Landmark> parallel_lms = inst.landmarks;
  update_landmarks(serial_lms, residuals, ExecPolicy::Serial);
  update_landmarks(parallel_lms, residuals, ExecPolicy::Parallel);

  for (const auto& [id, lm] : serial_lms) {
    CHECK((lm.p_global - parallel_lms.at(id).p_global).norm() == 0.0);
    CHECK((lm.P - parallel_lms.at(id).P).norm() == 0.0);
  }
}

TEST_CASE("stack assembles identically under both policies") {
  const oracles::RandomInstance inst = big_instance(801);
  std::vector<Observation> observations;
  for (const LandmarkRows& lr : inst.model.landmarks) {
    observations.insert(observations.end(), lr.used.begin(), lr.used.end());
  }
  GatingParams gating;
  gating.enabled = true;
  const StackedResidualModel a =
      stack(observations, inst.state, inst.landmarks, inst.cameras,
            inst.model.u, gating, nullptr, ExecPolicy::Serial);
  const StackedResidualModel b =
      stack(observations, inst.state, inst.landmarks, inst.cameras,
            inst.model.u, gating, nullptr, ExecPolicy::Parallel);
  CHECK((a.r - b.r).norm() == 0.0);
  CHECK((a.Jx - b.Jx).norm() == 0.0);
}
