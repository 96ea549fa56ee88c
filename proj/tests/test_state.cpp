#include <doctest.h>

#include "svio/state.hpp"
#include "test_support.hpp"

using namespace svio;

namespace {

SlidingWindowState make_state(std::mt19937_64& rng, int clones) {
  SlidingWindowState s;
  s.imu.q = test::random_quat(rng);
  s.imu.p = test::randn3(rng);
  s.imu.v = test::randn3(rng);
  for (int i = 0; i < clones; ++i) {
    s.augment(i);
    s.imu.p += test::randn3(rng, 0.1);
    s.imu.q = quat_error_compose(test::randn3(rng, 0.05), s.imu.q);
  }
  s.P = test::random_psd(rng, s.dim(), 1e-2);
  return s;
}

}  // namespace

TEST_CASE("augment from diagonal covariance") {
  SlidingWindowState s;
  VecX d = VecX::LinSpaced(15, 1.0, 15.0);
  s.P = d.asDiagonal();
  s.augment(0);

  REQUIRE(s.dim() == 21);
  REQUIRE(s.clones.size() == 1);
  CHECK(s.clones[0].id == 0);
  // Clone block equals diag(d1..d6); cross block equals rows 1-6 of P.
  CHECK((s.P.block<6, 6>(15, 15) - MatX(d.head<6>().asDiagonal())).norm() ==
        0.0);
  CHECK((s.P.block(15, 0, 6, 15) -
         MatX(MatX(d.asDiagonal()).topRows(6))).norm() == 0.0);
  CHECK((s.P - s.P.transpose()).norm() == 0.0);
}

TEST_CASE("augment twice: clone-clone cross block is the original pose block") {
  auto rng = test::make_rng(23);
  SlidingWindowState s;
  s.P = test::random_psd(rng, 15, 1.0);
  const Mat6 pose_block = s.P.topLeftCorner<6, 6>();
  s.augment(0);
  s.augment(1);
  CHECK((s.P.block<6, 6>(15, 21) - pose_block).norm() < 1e-14);
  CHECK((s.P.block<6, 6>(21, 15) - pose_block).norm() < 1e-14);
}

TEST_CASE("augment preserves positive semidefiniteness") {
  auto rng = test::make_rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    SlidingWindowState s;
    s.P = test::random_psd(rng, 15, 0.1);
    s.augment(0);
    s.augment(1);
    CHECK(test::is_psd(s.P));
  }
}

TEST_CASE("augment then marginalize is a bit-exact no-op") {
  auto rng = test::make_rng(31);
  SlidingWindowState s;
  s.P = test::random_psd(rng, 15, 1.0);
  const MatX before = s.P;
  s.augment(7);
  s.marginalize_clone(7);
  REQUIRE(s.dim() == 15);
  CHECK((s.P - before).norm() == 0.0);
  CHECK(s.clones.empty());
}

TEST_CASE("marginalizing the middle clone keeps the other blocks") {
  auto rng = test::make_rng(37);
  SlidingWindowState s = make_state(rng, 3);
  const MatX old = s.P;
  s.marginalize_clone(1);

  REQUIRE(s.dim() == 27);
  CHECK((s.P.topLeftCorner(21, 21) - old.topLeftCorner(21, 21)).norm() == 0.0);
  CHECK((s.P.block(21, 21, 6, 6) - old.block(27, 27, 6, 6)).norm() == 0.0);
  CHECK((s.P.block(0, 21, 21, 6) - old.block(0, 27, 21, 6)).norm() == 0.0);
  CHECK(s.clones[0].id == 0);
  CHECK(s.clones[1].id == 2);
  CHECK(test::is_psd(s.P));
}

TEST_CASE("marginalize unknown clone throws") {
  SlidingWindowState s;
  s.augment(0);
  CHECK_THROWS_AS(s.marginalize_clone(42), UnknownClone);
}

TEST_CASE("apply_correction") {
  auto rng = test::make_rng(41);
  SlidingWindowState s = make_state(rng, 2);

  SUBCASE("zero correction leaves the state unchanged") {
    const SlidingWindowState before = s;
    s.apply_correction(VecX::Zero(s.dim()));
    CHECK((s.imu.p - before.imu.p).norm() == 0.0);
    CHECK(s.imu.q.angularDistance(before.imu.q) < 1e-15);
    CHECK((s.clones[0].p - before.clones[0].p).norm() == 0.0);
  }

  SUBCASE("small attitude correction composes on the left") {
    const Quat before = s.imu.q;
    VecX dx = VecX::Zero(s.dim());
    dx(0) = 2e-3;
    s.apply_correction(dx);
    const Quat expected = (Quat(1.0, 1e-3, 0.0, 0.0) * before).normalized();
    CHECK(s.imu.q.angularDistance(expected) < 1e-14);
  }

  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(s.apply_correction(VecX::Zero(15)), DimensionMismatch);
  }

  SUBCASE("two small corrections approximately equal their sum") {
    for (const double scale : {1e-3, 1e-5}) {
      SlidingWindowState a = s, b = s;
      const VecX dx1 = scale * VecX::Random(s.dim());
      const VecX dx2 = scale * VecX::Random(s.dim());
      a.apply_correction(dx1);
      a.apply_correction(dx2);
      b.apply_correction(dx1 + dx2);
      CHECK(a.imu.q.angularDistance(b.imu.q) < 10.0 * scale * scale);
      CHECK((a.imu.p - b.imu.p).norm() == 0.0);
      CHECK(a.clones[1].q.angularDistance(b.clones[1].q) <
            10.0 * scale * scale);
    }
  }
}

TEST_CASE("random augment/marginalize sequences stay symmetric and sized") {
  auto rng = test::make_rng(43);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SlidingWindowState s;
  s.P = test::random_psd(rng, 15, 0.5);
  std::int64_t next_id = 0;
  for (int step = 0; step < 60; ++step) {
    if (s.clones.empty() || unif(rng) < 0.6) {
      s.augment(next_id++);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, s.clones.size() - 1);
      s.marginalize_clone(s.clones[pick(rng)].id);
    }
    REQUIRE(s.P.rows() == s.dim());
    const double scale = std::max(1.0, s.P.cwiseAbs().maxCoeff());
    CHECK((s.P - s.P.transpose()).cwiseAbs().maxCoeff() < 1e-9 * scale);
  }
}
