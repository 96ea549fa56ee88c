#pragma once

#include <string>
#include <vector>

#include "svio/filter.hpp"
#include "svio/propagation.hpp"
#include "svio/simulator.hpp"
#include "svio/state.hpp"

namespace svio {

struct TrajectoryRecord {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
};

/// EuRoC ASL imu0/data.csv: "timestamp [ns],wx,wy,wz,ax,ay,az", header lines
/// tolerated. Throws MalformedRow / NonMonotonicTime.
std::vector<ImuSample> read_imu_csv(const std::string& path);

/// EuRoC ASL ground-truth CSV: t[ns], p(3), q(w,x,y,z), v(3), bw(3), ba(3).
struct GroundTruthRecord {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
};
std::vector<GroundTruthRecord> read_groundtruth_csv(const std::string& path);

/// TUM trajectory text: "t tx ty tz qx qy qz qw", 9 decimal places.
void write_tum(const std::vector<TrajectoryRecord>& records,
               const std::string& path);
std::vector<TrajectoryRecord> read_tum(const std::string& path);

/// Closed-form least-squares SE(3) alignment (rotation + translation, no
/// scale) of est onto ref over paired positions.
struct Se3Alignment {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 apply(const Vec3& p) const { return R * p + t; }
};
Se3Alignment align_se3(const std::vector<Vec3>& est,
                       const std::vector<Vec3>& ref);

/// SE(3)-aligned absolute position RMSE with nearest-neighbor association
/// within max_dt. Throws InsufficientOverlap with fewer than 3 pairs.
double ate_rmse(const std::vector<TrajectoryRecord>& est,
                const std::vector<TrajectoryRecord>& gt,
                double max_dt = 0.01);

/// Position error of the last estimated pose after SE(3) alignment of the
/// whole trajectory (gauge-removed final error).
double aligned_final_error(const std::vector<TrajectoryRecord>& est,
                           const std::vector<TrajectoryRecord>& gt,
                           double max_dt = 0.01);

/// NEES of the current pose (theta, p; 6 dof) against ground truth.
double pose_nees(const SlidingWindowState& state, const Quat& q_true,
                 const Vec3& p_true);

/// Feature-track CSV: "t,landmark_id,camera,u_px,v_px" in pixel coordinates;
/// converted to/from normalized coordinates with the rig intrinsics.
void write_tracks_csv(const std::vector<FrameInput>& frames,
                      const std::vector<PinholeCamera>& cameras,
                      const std::string& path);
std::vector<FrameInput> read_tracks_csv(const std::string& path,
                                        const std::vector<PinholeCamera>& cameras);

/// Persists a simulation in the EuRoC ASL layout (mav0/imu0/data.csv,
/// mav0/state_groundtruth_estimate0/data.csv, mav0/tracks0/data.csv).
void write_euroc_layout(const SimOutput& sim, const std::string& dir);

struct EurocData {
  std::vector<ImuSample> imu;
  std::vector<GroundTruthRecord> gt;
  std::vector<FrameInput> frames;  // empty when no tracks0 present
};
EurocData read_euroc_layout(const std::string& dir,
                            const std::vector<PinholeCamera>& cameras);

/// JSON (de)serialization of the run configs; field names mirror the config
/// structs. Unknown keys are rejected.
std::string config_to_json(const SimConfig& sim, const FilterConfig& filter);
void config_from_json(const std::string& text, SimConfig* sim,
                      FilterConfig* filter);
void load_config_file(const std::string& path, SimConfig* sim,
                      FilterConfig* filter);

}  // namespace svio
