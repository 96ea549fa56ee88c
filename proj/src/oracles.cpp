#include "svio/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace svio::oracles {

namespace {

MatX dense_jf(const StackedResidualModel& model) {
  MatX jf = MatX::Zero(model.rows(), 3 * model.num_landmarks());
  for (int j = 0; j < model.num_landmarks(); ++j) {
    const LandmarkRows& lr = model.landmarks[static_cast<std::size_t>(j)];
    jf.block(lr.row_start, 3 * j, lr.Jf.rows(), 3) = lr.Jf;
  }
  return jf;
}

void check_landmark_ranks(const StackedResidualModel& model) {
  for (const LandmarkRows& lr : model.landmarks) {
    const Mat3 c3 = lr.Jf.transpose() * lr.Jf;
    Eigen::SelfAdjointEigenSolver<Mat3> eig(c3);
    if (lr.Jf.rows() < 3 ||
        eig.eigenvalues().minCoeff() <=
            1e-12 * std::max(1e-30, eig.eigenvalues().maxCoeff())) {
      throw SingularSystem("rank-deficient landmark block " +
                           std::to_string(lr.landmark_id));
    }
  }
}

DenseUpdate textbook_ekf(const MatX& h, const VecX& r, const MatX& p,
                         double u) {
  const int m = static_cast<int>(h.rows());
  const MatX innovation =
      h * p * h.transpose() + u * u * MatX::Identity(m, m);
  const MatX k = p * h.transpose() * innovation.ldlt().solve(
                                         MatX::Identity(m, m));
  DenseUpdate out;
  out.dx = k * r;
  const MatX a = MatX::Identity(p.rows(), p.cols()) - k * h;
  out.P_post = a * p * a.transpose() + u * u * k * k.transpose();
  out.P_post = 0.5 * (out.P_post + out.P_post.transpose()).eval();
  return out;
}

}  // namespace

DenseUpdate direct_marginalized_update(const StackedResidualModel& model,
                                       const SlidingWindowState& state) {
  if (model.rows() == 0) throw SingularSystem("empty model");
  check_landmark_ranks(model);

  const MatX jf = dense_jf(model);
  const int m = model.rows();
  // Dense Schur complement of the normal equations, realized as the
  // orthogonal projector onto the complement of range(Jf).
  const MatX gram = jf.transpose() * jf;
  const MatX proj =
      MatX::Identity(m, m) -
      jf * gram.ldlt().solve(MatX::Identity(gram.rows(), gram.cols())) *
          jf.transpose();
  const MatX h = proj * model.Jx;
  const VecX r = proj * model.r;
  return textbook_ekf(h, r, state.P, model.u);
}

DenseUpdate nullspace_update(const StackedResidualModel& model,
                             const SlidingWindowState& state) {
  if (model.rows() == 0) throw SingularSystem("empty model");
  check_landmark_ranks(model);

  int total_rows = 0;
  for (const LandmarkRows& lr : model.landmarks) {
    total_rows += static_cast<int>(lr.Jf.rows()) - 3;
  }
  MatX h = MatX::Zero(total_rows, model.dim_x);
  VecX r = VecX::Zero(total_rows);
  int row = 0;
  for (const LandmarkRows& lr : model.landmarks) {
    const int mj = static_cast<int>(lr.Jf.rows());
    Eigen::HouseholderQR<MatX> qr(lr.Jf);
    const MatX q = qr.householderQ();
    const MatX nullspace = q.rightCols(mj - 3);
    h.middleRows(row, mj - 3) =
        nullspace.transpose() * model.Jx.middleRows(lr.row_start, mj);
    r.segment(row, mj - 3) =
        nullspace.transpose() * model.r.segment(lr.row_start, mj);
    row += mj - 3;
  }
  return textbook_ekf(h, r, state.P, model.u);
}

Vec3 gauss_newton_landmark(std::span<const Observation> track,
                           const SlidingWindowState& state,
                           const std::vector<PinholeCamera>& cameras,
                           const Vec3& p0) {
  if (track.size() < 2) throw SingularSystem("fewer than 2 observations");
  Vec3 p = p0;
  for (int it = 0; it < 20; ++it) {
    Mat3 hessian = Mat3::Zero();
    Vec3 grad = Vec3::Zero();
    for (const Observation& obs : track) {
      const ClonePose& clone = state.clone(obs.clone_id);
      const PinholeCamera& cam = cameras.at(static_cast<std::size_t>(obs.camera));
      const Mat3 r_gc = clone.q.toRotationMatrix() * cam.R_ic;
      const Vec3 center = clone.p + clone.q.toRotationMatrix() * cam.p_ic;
      const Vec3 p_cam = r_gc.transpose() * (p - center);
      const auto z_hat = project(p_cam);
      const auto j_proj = projection_jacobian(p_cam);
      if (!z_hat) continue;
      const Mat23 jf = *j_proj * r_gc.transpose();
      hessian += jf.transpose() * jf;
      grad += jf.transpose() * (obs.z - *z_hat);
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(hessian);
    if (eig.eigenvalues().minCoeff() <=
        1e-12 * std::max(1e-30, eig.eigenvalues().maxCoeff())) {
      throw SingularSystem("ill-conditioned landmark system");
    }
    const Vec3 dp = hessian.ldlt().solve(grad);
    p += dp;
    if (dp.norm() < 1e-10) break;
  }
  return p;
}

MatX numeric_jacobian(const std::function<VecX(const VecX&)>& f,
                      const VecX& x0, double eps) {
  const VecX f0 = f(x0);
  MatX jac(f0.size(), x0.size());
  for (int i = 0; i < x0.size(); ++i) {
    const double h = eps * std::max(1.0, std::abs(x0(i)));
    VecX plus = x0, minus = x0;
    plus(i) += h;
    minus(i) -= h;
    jac.col(i) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return jac;
}

MatX expm(const MatX& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  }
  const MatX b = a / std::pow(2.0, squarings);
  MatX term = MatX::Identity(a.rows(), a.cols());
  MatX sum = term;
  for (int k = 1; k <= 60; ++k) {
    term = term * b / static_cast<double>(k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-20 * sum.cwiseAbs().maxCoeff()) break;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

RandomInstance make_random_instance(std::mt19937_64& rng,
                                    const RandomInstanceParams& params) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto randn3 = [&] { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };

  RandomInstance inst;

  // Forward-looking stereo rig: camera z along body +x, baseline along -y.
  PinholeCamera cam0;
  cam0.R_ic << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  cam0.p_ic = Vec3(0.01, 0.05, -0.02);
  PinholeCamera cam1 = cam0;
  cam1.p_ic = cam0.p_ic + cam0.R_ic * Vec3(0.11, 0.0, 0.0);
  inst.cameras = {cam0, cam1};

  // Clones along a jittered arc, modest attitude spread.
  inst.state.imu.q = quat_error_compose(0.2 * randn3(), Quat::Identity());
  inst.state.imu.p = 0.1 * randn3();
  for (int i = 0; i < params.num_clones; ++i) {
    ClonePose clone;
    clone.id = i;
    clone.p = Vec3(0.4 * i, 0.0, 0.0) + 0.15 * randn3();
    clone.q = quat_error_compose(0.1 * randn3(), inst.state.imu.q);
    clone.t = 0.05 * i;
    inst.state.clones.push_back(clone);
  }

  // Correlated PSD covariance with bounded conditioning.
  const int dim = inst.state.dim();
  MatX l = MatX::NullaryExpr(dim, dim + 6, [&](Eigen::Index, Eigen::Index) {
    return gauss(rng);
  });
  inst.state.P = 1e-4 * (l * l.transpose()) / static_cast<double>(dim + 6) +
                 1e-6 * MatX::Identity(dim, dim);
  symmetrize(inst.state.P);

  // Landmark field in front of the rig (body +x), with optional far-away
  // (near-zero parallax) landmarks to exercise the singular-block guard.
  std::vector<Observation> observations;
  std::uniform_int_distribution<int> num_obs(params.min_observations,
                                             params.max_observations);
  std::uniform_int_distribution<int> clone_pick(0, params.num_clones - 1);
  for (int j = 0; j < params.num_landmarks; ++j) {
    const bool degenerate = unif(rng) < params.degenerate_fraction;
    Vec3 p_true = Vec3(6.0 + 4.0 * unif(rng), 4.0 * (unif(rng) - 0.5),
                       2.0 * (unif(rng) - 0.5));
    if (degenerate) p_true *= 2e6;

    Landmark lm;
    lm.id = j;
    lm.p_global = p_true + (degenerate ? Vec3::Zero() : Vec3(0.02 * randn3()));
    lm.P = 0.05 * Mat3::Identity();
    lm.status = LandmarkStatus::Estimating;

    const int target = num_obs(rng);
    int attempts = 0;
    std::vector<Observation> track;
    while (static_cast<int>(track.size()) < target && attempts++ < 64) {
      Observation obs;
      obs.landmark_id = j;
      obs.clone_id = clone_pick(rng);
      obs.camera = static_cast<int>(unif(rng) < 0.5);
      const bool dup = std::any_of(track.begin(), track.end(), [&](const auto& o) {
        return o.clone_id == obs.clone_id && o.camera == obs.camera;
      });
      if (dup) continue;
      const ClonePose& clone = inst.state.clone(obs.clone_id);
      const PinholeCamera& cam = inst.cameras[static_cast<std::size_t>(obs.camera)];
      const Vec3 p_cam = cam.to_camera(clone.q.toRotationMatrix().transpose() *
                                       (p_true - clone.p));
      const auto z = project(p_cam);
      if (!z) continue;
      obs.z = *z + 2e-3 * Vec2(gauss(rng), gauss(rng));
      track.push_back(obs);
    }
    std::int64_t distinct = -1;
    int n_clones = 0;
    std::sort(track.begin(), track.end(), [](const auto& a, const auto& b) {
      return std::tie(a.clone_id, a.camera) < std::tie(b.clone_id, b.camera);
    });
    for (const auto& o : track) {
      if (o.clone_id != distinct) {
        ++n_clones;
        distinct = o.clone_id;
      }
    }
    if (static_cast<int>(track.size()) < 2 || n_clones < 2) continue;
    inst.landmarks.emplace(lm.id, lm);
    observations.insert(observations.end(), track.begin(), track.end());
  }

  GatingParams no_gating;
  no_gating.enabled = false;
  inst.model = stack(observations, inst.state, inst.landmarks, inst.cameras,
                     params.u, no_gating);
  return inst;
}

StackedResidualModel remove_landmarks(const StackedResidualModel& model,
                                      const std::vector<std::int64_t>& ids) {
  StackedResidualModel out;
  out.dim_x = model.dim_x;
  out.u = model.u;
  int rows = 0;
  for (const LandmarkRows& lr : model.landmarks) {
    if (std::find(ids.begin(), ids.end(), lr.landmark_id) != ids.end()) {
      continue;
    }
    rows += static_cast<int>(lr.Jf.rows());
  }
  out.r.resize(rows);
  out.Jx.resize(rows, model.dim_x);
  int row = 0;
  for (const LandmarkRows& lr : model.landmarks) {
    if (std::find(ids.begin(), ids.end(), lr.landmark_id) != ids.end()) {
      continue;
    }
    const int mj = static_cast<int>(lr.Jf.rows());
    LandmarkRows copy = lr;
    copy.row_start = row;
    out.r.segment(row, mj) = model.r.segment(lr.row_start, mj);
    out.Jx.middleRows(row, mj) = model.Jx.middleRows(lr.row_start, mj);
    out.landmarks.push_back(std::move(copy));
    row += mj;
  }
  return out;
}

}  // namespace svio::oracles
