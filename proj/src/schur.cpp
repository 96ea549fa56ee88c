#include "svio/schur.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svio {

namespace {

/// Closed-form inverse of a symmetric positive-definite 3x3 matrix via the
/// adjugate; allocation-free, the dominant per-landmark cost.
Mat3 inverse_sym3(const Mat3& m, double det) {
  Mat3 inv;
  inv(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  inv(0, 1) = m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2);
  inv(0, 2) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
  inv(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
  inv(1, 2) = m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2);
  inv(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  inv(1, 0) = inv(0, 1);
  inv(2, 0) = inv(0, 2);
  inv(2, 1) = inv(1, 2);
  return inv / det;
}

/// Minimum eigenvalue of a symmetric 3x3 matrix (characteristic-polynomial
/// form, no allocation).
double min_eig_sym3(const Mat3& m) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

SchurLandmark build_landmark_entry(const StackedResidualModel& model,
                                   const LandmarkRows& lr) {
  SchurLandmark entry;
  entry.id = lr.landmark_id;
  const int rows = static_cast<int>(lr.Jf.rows());
  const auto jx = model.Jx.middleRows(lr.row_start, rows);
  const auto r = model.r.segment(lr.row_start, rows);

  entry.b2 = lr.Jf.transpose() * r;
  entry.C3 = lr.Jf.transpose() * lr.Jf;
  entry.C2 = jx.transpose() * lr.Jf;

  // Jx rows of one observation live in a single clone block, so this
  // landmark's C1 contribution is block-diagonal over the observed clones.
  for (int k = 0; 2 * k < rows; ++k) {
    const int off = [&] {
      for (int c = 15; c < model.dim_x; c += 6) {
        if (!jx.block<2, 6>(2 * k, c).isZero(0.0)) return c;
      }
      return -1;
    }();
    if (off < 0) continue;  // fully zero rows contribute nothing
    const Mat26 j_clone = jx.block<2, 6>(2 * k, off);
    const Vec2 rk = r.segment<2>(2 * k);
    auto blk = std::find_if(entry.c1_blocks.begin(), entry.c1_blocks.end(),
                            [&](const auto& p) { return p.first == off; });
    if (blk == entry.c1_blocks.end()) {
      entry.c1_blocks.emplace_back(off, Mat6(j_clone.transpose() * j_clone));
      entry.b1_blocks.emplace_back(off, Vec6(j_clone.transpose() * rk));
    } else {
      blk->second += j_clone.transpose() * j_clone;
      entry.b1_blocks[static_cast<std::size_t>(
                          blk - entry.c1_blocks.begin())]
          .second += j_clone.transpose() * rk;
    }
  }
  return entry;
}

}  // namespace

SchurSystem build_equivalent(const StackedResidualModel& model,
                             ExecPolicy policy) {
  if (model.rows() == 0) throw EmptyModel("stacked model has no rows");

  SchurSystem sys;
  sys.dim_x = model.dim_x;
  sys.u = model.u;
  sys.landmarks.resize(model.landmarks.size());

  const auto n = static_cast<std::int64_t>(model.landmarks.size());
  if (policy == ExecPolicy::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      sys.landmarks[i] = build_landmark_entry(model, model.landmarks[i]);
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      sys.landmarks[i] = build_landmark_entry(model, model.landmarks[i]);
    }
  }

  // Totals are assembled in landmark order; the per-landmark pieces above are
  // independent, so the result does not depend on the thread count.
  sys.C1 = MatX::Zero(sys.dim_x, sys.dim_x);
  sys.b1 = VecX::Zero(sys.dim_x);
  for (const SchurLandmark& lm : sys.landmarks) {
    for (const auto& [off, blk] : lm.c1_blocks) {
      sys.C1.block<6, 6>(off, off) += blk;
    }
    for (const auto& [off, blk] : lm.b1_blocks) {
      sys.b1.segment<6>(off) += blk;
    }
  }
  return sys;
}

namespace {

struct Downdate {
  MatX S;
  VecX b;
};

Downdate landmark_downdate(const SchurLandmark& lm, const Mat3& c3_inv) {
  Downdate d;
  const MatX c2_c3inv = lm.C2 * c3_inv;  // dim_x x 3
  d.S = c2_c3inv * lm.C2.transpose();
  d.b = c2_c3inv * lm.b2;
  return d;
}

}  // namespace

SchurOutcome schur_marginalize(const SchurSystem& sys, double c3_eps,
                               ExecPolicy policy) {
  SchurOutcome out;
  out.prm.dim_x = sys.dim_x;
  out.prm.u = sys.u;
  out.prm.S = sys.C1;
  out.prm.b_s = sys.b1;

  std::vector<const SchurLandmark*> kept;
  std::vector<Mat3> inverses;
  kept.reserve(sys.landmarks.size());
  for (const SchurLandmark& lm : sys.landmarks) {
    const double det = lm.C3.determinant();
    if (!(det > 0.0) || min_eig_sym3(lm.C3) <= c3_eps) {
      out.removed.push_back(lm.id);
      // Degenerate geometry: all of this landmark's contributions leave the
      // system, then the marginalization proceeds with the rest.
      for (const auto& [off, blk] : lm.c1_blocks) {
        out.prm.S.block<6, 6>(off, off) -= blk;
      }
      for (const auto& [off, blk] : lm.b1_blocks) {
        out.prm.b_s.segment<6>(off) -= blk;
      }
      continue;
    }
    kept.push_back(&lm);
    inverses.push_back(inverse_sym3(lm.C3, det));
  }

  if (kept.empty()) {
    out.prm.S.setZero();
    out.prm.b_s.setZero();
    return out;
  }

  if (policy == ExecPolicy::Parallel) {
    // Rank-3 downdates, reduced with a fixed pairwise tree over the landmark
    // index so the sum is bitwise reproducible for any thread count.
    std::vector<Downdate> pieces(kept.size());
    const auto n = static_cast<std::int64_t>(kept.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      pieces[i] = landmark_downdate(*kept[i], inverses[i]);
    }
    Downdate total;
#ifdef _OPENMP
#pragma omp parallel
#pragma omp single
#endif
    total = pairwise_reduce(std::span<const Downdate>(pieces),
                            [](const Downdate& a, const Downdate& b) {
                              return Downdate{a.S + b.S, a.b + b.b};
                            });
    out.prm.S -= total.S;
    out.prm.b_s -= total.b;
  } else {
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const Downdate d = landmark_downdate(*kept[i], inverses[i]);
      out.prm.S -= d.S;
      out.prm.b_s -= d.b;
    }
  }
  return out;
}

PoseUpdateResult ekf_update_pose(SlidingWindowState& state,
                                 const PoseResidualModel& prm) {
  const int dim = state.dim();
  if (prm.dim_x != dim || prm.S.rows() != dim || prm.S.cols() != dim ||
      prm.b_s.size() != dim) {
    throw DimensionMismatch("pose residual model does not match state");
  }
  const double scale = std::max(1.0, prm.S.cwiseAbs().maxCoeff());
  if ((prm.S - prm.S.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw std::invalid_argument("pose residual model S is not symmetric");
  }

  const double u2 = prm.u * prm.u;
  // Innovation S P S^T + S u^2 = S (P S + u^2 I). Solving through the right
  // factor keeps the gain well-defined when S is rank-deficient.
  const MatX ps = prm.S * state.P;
  Eigen::PartialPivLU<MatX> lu(ps + u2 * MatX::Identity(dim, dim));
  const MatX k_t = lu.solve(state.P);
  if (!k_t.allFinite()) {
    log::warn("pose update skipped: innovation solve failed");
    return {};
  }
  const MatX k = k_t.transpose();

  PoseUpdateResult result;
  result.ok = true;
  result.dx = k * prm.b_s;

  const MatX a = MatX::Identity(dim, dim) - k * prm.S;
  state.P = a * state.P * a.transpose() + u2 * k * prm.S * k.transpose();
  symmetrize(state.P);
  state.apply_correction(result.dx);
  return result;
}

}  // namespace svio
