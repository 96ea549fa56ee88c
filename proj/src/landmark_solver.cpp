#include "svio/landmark_solver.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svio {

std::vector<LandmarkResidual> split_landmark_system(const SchurSystem& sys,
                                                    const VecX& dx) {
  if (dx.size() != sys.dim_x) {
    throw DimensionMismatch("dx does not match the Schur system dimension");
  }
  std::vector<LandmarkResidual> out;
  out.reserve(sys.landmarks.size());
  for (const SchurLandmark& lm : sys.landmarks) {
    LandmarkResidual res;
    res.id = lm.id;
    res.r = lm.b2 - lm.C2.transpose() * dx;
    res.C3 = lm.C3;
    res.u = sys.u;
    out.push_back(res);
  }
  return out;
}

LandmarkUpdateStatus ekf_update_landmark(Landmark& lm,
                                         const LandmarkResidual& res) {
  const double u2 = res.u * res.u;
  // Innovation C3 P C3 + C3 u^2 = C3 (P C3 + u^2 I); gain through the right
  // factor, as in the pose update.
  const Mat3 m = res.C3 * lm.P + u2 * Mat3::Identity();
  const double det = m.determinant();
  if (!(std::abs(det) > 1e-300) || !std::isfinite(det)) {
    lm.status = LandmarkStatus::Rejected;
    return LandmarkUpdateStatus::Rejected;
  }
  const Mat3 k = lm.P * m.inverse();
  const Vec3 dp = k * res.r;

  const Mat3 a = Mat3::Identity() - k * res.C3;
  const Mat3 p_post =
      a * lm.P * a.transpose() + u2 * k * res.C3 * k.transpose();
  if (!dp.allFinite() || !p_post.allFinite()) {
    lm.status = LandmarkStatus::Rejected;
    return LandmarkUpdateStatus::Rejected;
  }
  lm.p_global += dp;
  lm.P = 0.5 * (p_post + p_post.transpose());
  return LandmarkUpdateStatus::Updated;
}

void update_landmarks(std::map<std::int64_t, Landmark>& landmarks,
                      const std::vector<LandmarkResidual>& residuals,
                      ExecPolicy policy) {
  // Disjoint per-landmark work: safe to run in any order or in parallel.
  std::vector<Landmark*> targets(residuals.size(), nullptr);
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    auto it = landmarks.find(residuals[i].id);
    if (it != landmarks.end()) targets[i] = &it->second;
  }
  const auto n = static_cast<std::int64_t>(residuals.size());
  if (policy == ExecPolicy::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      if (targets[i] != nullptr) ekf_update_landmark(*targets[i], residuals[i]);
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      if (targets[i] != nullptr) ekf_update_landmark(*targets[i], residuals[i]);
    }
  }
}

Mat3 clamp_landmark_covariance(const Mat3& P, double floor_var,
                               double cap_var) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (P + P.transpose()));
  Vec3 vals = eig.eigenvalues().cwiseMax(floor_var).cwiseMin(cap_var);
  return eig.eigenvectors() * vals.asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace svio
