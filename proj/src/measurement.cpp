#include "svio/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svio {

std::optional<ResidualJacobians> residual_and_jacobians(
    const Observation& obs, const SlidingWindowState& state,
    const Landmark& lm, const PinholeCamera& cam) {
  const ClonePose& clone = state.clone(obs.clone_id);
  const Mat3 r_gi = clone.q.toRotationMatrix();
  const Mat3 r_gc = r_gi * cam.R_ic;

  const Vec3 p_imu = r_gi.transpose() * (lm.p_global - clone.p);
  const Vec3 p_cam = cam.R_ic.transpose() * (p_imu - cam.p_ic);

  const auto z_hat = project(p_cam);
  if (!z_hat) return std::nullopt;
  const auto j_proj = projection_jacobian(p_cam);

  ResidualJacobians out;
  out.r = obs.z - *z_hat;
  out.J_clone.leftCols<3>() =
      *j_proj * (cam.R_ic.transpose() * skew(p_imu) * r_gi.transpose());
  out.J_clone.rightCols<3>() = *j_proj * (-r_gc.transpose());
  out.J_f = *j_proj * r_gc.transpose();
  return out;
}

namespace {

enum class ObsFate { Keep, BehindCamera, Gated };

struct EvaluatedObs {
  Observation obs;
  ResidualJacobians rj;
  ObsFate fate = ObsFate::Keep;
};

ObsFate evaluate_one(const Observation& obs, const SlidingWindowState& state,
                     const std::map<std::int64_t, Landmark>& landmarks,
                     const std::vector<PinholeCamera>& cameras, double u,
                     const GatingParams& gating, ResidualJacobians* rj) {
  const Landmark& lm = landmarks.at(obs.landmark_id);
  const PinholeCamera& cam = cameras.at(static_cast<std::size_t>(obs.camera));
  auto maybe = residual_and_jacobians(obs, state, lm, cam);
  if (!maybe) return ObsFate::BehindCamera;
  *rj = *maybe;
  if (gating.enabled) {
    const int off = state.clone_offset(state.clone_index(obs.clone_id));
    const Mat6 p_cc = state.P.block<6, 6>(off, off);
    Mat2 s = rj->J_clone * p_cc * rj->J_clone.transpose() +
             rj->J_f * lm.P * rj->J_f.transpose() + u * u * Mat2::Identity();
    const double m = rj->r.dot(s.ldlt().solve(rj->r));
    if (m > gating.chi2_gate) return ObsFate::Gated;
  }
  return ObsFate::Keep;
}

}  // namespace

StackedResidualModel stack(std::span<const Observation> observations,
                           const SlidingWindowState& state,
                           const std::map<std::int64_t, Landmark>& landmarks,
                           const std::vector<PinholeCamera>& cameras,
                           double u, const GatingParams& gating,
                           StackReport* report, ExecPolicy policy) {
  // Deterministic assembly order regardless of the input ordering (and of
  // any internal parallelism): landmark id, then clone id, then camera.
  std::vector<EvaluatedObs> evals(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    evals[i].obs = observations[i];
  }
  std::sort(evals.begin(), evals.end(),
            [](const EvaluatedObs& a, const EvaluatedObs& b) {
              return std::tie(a.obs.landmark_id, a.obs.clone_id, a.obs.camera) <
                     std::tie(b.obs.landmark_id, b.obs.clone_id, b.obs.camera);
            });

  const auto n = static_cast<std::int64_t>(evals.size());
  if (policy == ExecPolicy::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      evals[i].fate = evaluate_one(evals[i].obs, state, landmarks, cameras, u,
                                   gating, &evals[i].rj);
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      evals[i].fate = evaluate_one(evals[i].obs, state, landmarks, cameras, u,
                                   gating, &evals[i].rj);
    }
  }

  StackReport local_report;
  std::vector<const EvaluatedObs*> rows;
  rows.reserve(evals.size());

  StackedResidualModel model;
  model.dim_x = state.dim();
  model.u = u;

  // Group by landmark, drop groups that are no longer triangulable.
  std::size_t i = 0;
  while (i < evals.size()) {
    std::size_t j = i;
    std::vector<const EvaluatedObs*> group;
    std::int64_t prev_clone = -1;
    int distinct_clones = 0;
    while (j < evals.size() &&
           evals[j].obs.landmark_id == evals[i].obs.landmark_id) {
      const EvaluatedObs& e = evals[j];
      if (e.fate == ObsFate::Keep) {
        group.push_back(&e);
        if (e.obs.clone_id != prev_clone) {
          ++distinct_clones;
          prev_clone = e.obs.clone_id;
        }
      } else if (e.fate == ObsFate::BehindCamera) {
        ++local_report.behind_camera;
      } else {
        ++local_report.gated;
      }
      ++j;
    }
    if (static_cast<int>(group.size()) >= 2 && distinct_clones >= 2) {
      LandmarkRows lr;
      lr.landmark_id = evals[i].obs.landmark_id;
      lr.row_start = 2 * static_cast<int>(rows.size());
      lr.Jf.resize(2 * static_cast<int>(group.size()), 3);
      for (std::size_t k = 0; k < group.size(); ++k) {
        lr.Jf.middleRows<2>(2 * static_cast<int>(k)) = group[k]->rj.J_f;
        lr.used.push_back(group[k]->obs);
        rows.push_back(group[k]);
      }
      model.landmarks.push_back(std::move(lr));
    } else {
      local_report.insufficient_track.push_back(evals[i].obs.landmark_id);
    }
    i = j;
  }

  const int m = 2 * static_cast<int>(rows.size());
  model.r.resize(m);
  model.Jx = MatX::Zero(m, model.dim_x);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const EvaluatedObs& e = *rows[k];
    const int row = 2 * static_cast<int>(k);
    const int off = state.clone_offset(state.clone_index(e.obs.clone_id));
    model.r.segment<2>(row) = e.rj.r;
    model.Jx.block<2, 6>(row, off) = e.rj.J_clone;
  }

  if (report != nullptr) *report = std::move(local_report);
  return model;
}

TriangulationResult triangulate(std::span<const Observation> track,
                                const SlidingWindowState& state,
                                const std::vector<PinholeCamera>& cameras,
                                double u, const TriangulationParams& params) {
  TriangulationResult out;

  struct Ray {
    Mat3 R_cw;   // global -> camera
    Vec3 center; // camera center in global
    Vec2 z;
  };
  std::vector<Ray> rays;
  rays.reserve(track.size());
  double max_parallax = 0.0;
  std::vector<Vec3> dirs;
  for (const Observation& obs : track) {
    const ClonePose& clone = state.clone(obs.clone_id);
    const PinholeCamera& cam = cameras.at(static_cast<std::size_t>(obs.camera));
    const Mat3 r_gc = clone.q.toRotationMatrix() * cam.R_ic;
    Ray ray;
    ray.R_cw = r_gc.transpose();
    ray.center = clone.p + clone.q.toRotationMatrix() * cam.p_ic;
    ray.z = obs.z;
    rays.push_back(ray);
    dirs.push_back((r_gc * Vec3(obs.z.x(), obs.z.y(), 1.0)).normalized());
  }
  for (std::size_t a = 0; a < dirs.size(); ++a) {
    for (std::size_t b = a + 1; b < dirs.size(); ++b) {
      const double c = std::clamp(dirs[a].dot(dirs[b]), -1.0, 1.0);
      max_parallax = std::max(max_parallax, std::acos(c));
    }
  }
  if (rays.size() < 2 ||
      max_parallax < params.min_parallax_deg * M_PI / 180.0) {
    out.status = TriangulationStatus::LowParallax;
    return out;
  }

  // Linear DLT: (r1 - x r3) (p - c) = 0, (r2 - y r3) (p - c) = 0.
  MatX a(2 * rays.size(), 3);
  VecX b(2 * rays.size());
  for (std::size_t k = 0; k < rays.size(); ++k) {
    const Ray& ray = rays[k];
    const Eigen::RowVector3d r1 = ray.R_cw.row(0);
    const Eigen::RowVector3d r2 = ray.R_cw.row(1);
    const Eigen::RowVector3d r3 = ray.R_cw.row(2);
    a.row(2 * k) = r1 - ray.z.x() * r3;
    a.row(2 * k + 1) = r2 - ray.z.y() * r3;
    b(2 * k) = a.row(2 * k).dot(ray.center);
    b(2 * k + 1) = a.row(2 * k + 1).dot(ray.center);
  }
  Vec3 p = a.colPivHouseholderQr().solve(b);

  // Gauss-Newton refinement on the reprojection error.
  Mat3 hessian = Mat3::Zero();
  for (int it = 0; it < params.max_gn_iterations; ++it) {
    hessian.setZero();
    Vec3 grad = Vec3::Zero();
    int valid = 0;
    for (const Ray& ray : rays) {
      const Vec3 p_cam = ray.R_cw * (p - ray.center);
      const auto z_hat = project(p_cam);
      const auto j_proj = projection_jacobian(p_cam);
      if (!z_hat) continue;
      const Mat23 jf = *j_proj * ray.R_cw;
      hessian += jf.transpose() * jf;
      grad += jf.transpose() * (ray.z - *z_hat);
      ++valid;
    }
    if (valid < 2) {
      out.status = TriangulationStatus::IllConditioned;
      return out;
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(hessian);
    if (eig.eigenvalues().minCoeff() <= 0.0 ||
        eig.eigenvalues().maxCoeff() >
            params.max_condition * eig.eigenvalues().minCoeff()) {
      out.status = TriangulationStatus::IllConditioned;
      return out;
    }
    const Vec3 dp = hessian.ldlt().solve(grad);
    p += dp;
    if (dp.norm() < 1e-12) break;
  }

  // Covariance from the information at the solution.
  hessian.setZero();
  int valid = 0;
  for (const Ray& ray : rays) {
    const Vec3 p_cam = ray.R_cw * (p - ray.center);
    const auto j_proj = projection_jacobian(p_cam);
    if (!j_proj) continue;
    const Mat23 jf = *j_proj * ray.R_cw;
    hessian += jf.transpose() * jf;
    ++valid;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(hessian);
  if (valid < 2 || eig.eigenvalues().minCoeff() <= 0.0 ||
      eig.eigenvalues().maxCoeff() >
          params.max_condition * eig.eigenvalues().minCoeff()) {
    out.status = TriangulationStatus::IllConditioned;
    return out;
  }

  out.status = TriangulationStatus::Ok;
  out.p_global = p;
  out.P0 = u * u * hessian.inverse();
  out.P0 = 0.5 * (out.P0 + out.P0.transpose()).eval();
  return out;
}

}  // namespace svio
