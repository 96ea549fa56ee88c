#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string>

namespace svio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using MatX = Eigen::MatrixXd;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Quat = Eigen::Quaterniond;

/// Execution policy for the data-parallel kernels. Serial is the plain
/// reference implementation; Parallel uses OpenMP with a fixed reduction
/// order so results do not depend on the thread count.
enum class ExecPolicy { Serial, Parallel };

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct UnknownClone : std::out_of_range {
  using std::out_of_range::out_of_range;
};
struct InvalidDt : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InvalidConfig : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedRow : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonMonotonicTime : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientOverlap : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyModel : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Level is read once from the SV_LOG environment variable
/// (error|warn|info|debug); default is warn.
Level level();
void write(Level lvl, const std::string& msg);

inline void error(const std::string& m) { write(Level::Error, m); }
inline void warn(const std::string& m) { write(Level::Warn, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void debug(const std::string& m) { write(Level::Debug, m); }

}  // namespace log

/// chi-square quantile for 2 degrees of freedom (closed form).
inline double chi2_gate_2dof(double confidence) {
  return -2.0 * std::log(1.0 - confidence);
}

/// Symmetrize in place: P <- (P + P^T)/2.
inline void symmetrize(MatX& P) { P = ((P + P.transpose()) * 0.5).eval(); }

/// Fixed-association pairwise sum over a span of summands. The splitting is a
/// function of the index range only, so the result is bitwise identical no
/// matter how many threads execute it.
template <class T, class Plus>
T pairwise_reduce(std::span<const T> items, Plus plus, std::size_t grain = 8) {
  const std::size_t n = items.size();
  if (n == 1) return items[0];
  if (n <= grain) {
    T acc = items[0];
    for (std::size_t i = 1; i < n; ++i) acc = plus(acc, items[i]);
    return acc;
  }
  const std::size_t mid = n / 2;
  T left, right;
#pragma omp task shared(left) if (n > 4 * grain)
  left = pairwise_reduce(items.first(mid), plus, grain);
  right = pairwise_reduce(items.subspan(mid), plus, grain);
#pragma omp taskwait
  return plus(left, right);
}

}  // namespace svio
