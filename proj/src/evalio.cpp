#include "svio/evalio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace svio {

namespace {

// Locale-independent numeric parsing/printing via std::from_chars/to_chars.

double parse_double(std::string_view token, const char* what, int line_no) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin) {
    throw MalformedRow(std::string("bad ") + what + " at line " +
                       std::to_string(line_no));
  }
  return value;
}

std::string format_fixed9(double v) {
  char buf[64];
  const auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 9);
  return std::string(buf, ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

bool is_header_or_blank(const std::string& line) {
  const std::size_t pos = line.find_first_not_of(" \t\r");
  if (pos == std::string::npos || line[pos] == '#') return true;
  const char c = line[pos];
  return !(std::isdigit(static_cast<unsigned char>(c)) || c == '+' ||
           c == '-' || c == '.');
}

std::string chomp(std::string line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) {
    line.pop_back();
  }
  return line;
}

}  // namespace

std::vector<ImuSample> read_imu_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ImuSample> out;
  std::string line;
  int line_no = 0;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (is_header_or_blank(line)) continue;
    const auto tokens = split_csv(line);
    if (tokens.size() != 7) {
      throw MalformedRow("expected 7 columns at line " + std::to_string(line_no));
    }
    ImuSample s;
    s.t = parse_double(tokens[0], "timestamp", line_no) * 1e-9;
    for (int i = 0; i < 3; ++i) {
      s.omega(i) = parse_double(tokens[1 + i], "gyro", line_no);
      s.acc(i) = parse_double(tokens[4 + i], "accel", line_no);
    }
    if (!(s.t > prev_t)) {
      throw NonMonotonicTime("non-increasing timestamp at line " +
                             std::to_string(line_no));
    }
    prev_t = s.t;
    out.push_back(s);
  }
  return out;
}

std::vector<GroundTruthRecord> read_groundtruth_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<GroundTruthRecord> out;
  std::string line;
  int line_no = 0;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (is_header_or_blank(line)) continue;
    const auto tokens = split_csv(line);
    if (tokens.size() < 17) {
      throw MalformedRow("expected 17 columns at line " + std::to_string(line_no));
    }
    GroundTruthRecord r;
    r.t = parse_double(tokens[0], "timestamp", line_no) * 1e-9;
    for (int i = 0; i < 3; ++i) r.p(i) = parse_double(tokens[1 + i], "p", line_no);
    r.q = Quat(parse_double(tokens[4], "qw", line_no),
               parse_double(tokens[5], "qx", line_no),
               parse_double(tokens[6], "qy", line_no),
               parse_double(tokens[7], "qz", line_no));
    r.q.normalize();
    for (int i = 0; i < 3; ++i) {
      r.v(i) = parse_double(tokens[8 + i], "v", line_no);
      r.bg(i) = parse_double(tokens[11 + i], "bw", line_no);
      r.ba(i) = parse_double(tokens[14 + i], "ba", line_no);
    }
    if (!(r.t > prev_t)) {
      throw NonMonotonicTime("non-increasing timestamp at line " +
                             std::to_string(line_no));
    }
    prev_t = r.t;
    out.push_back(r);
  }
  return out;
}

void write_tum(const std::vector<TrajectoryRecord>& records,
               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  std::string buffer;
  for (const TrajectoryRecord& r : records) {
    buffer.clear();
    buffer += format_fixed9(r.t);
    for (const double v : {r.p.x(), r.p.y(), r.p.z(), r.q.x(), r.q.y(),
                           r.q.z(), r.q.w()}) {
      buffer += ' ';
      buffer += format_fixed9(v);
    }
    buffer += '\n';
    out << buffer;
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<TrajectoryRecord> read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<TrajectoryRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    if (tokens.size() != 8) {
      throw MalformedRow("expected 8 fields at line " + std::to_string(line_no));
    }
    TrajectoryRecord r;
    r.t = parse_double(tokens[0], "t", line_no);
    r.p = Vec3(parse_double(tokens[1], "tx", line_no),
               parse_double(tokens[2], "ty", line_no),
               parse_double(tokens[3], "tz", line_no));
    r.q = Quat(parse_double(tokens[7], "qw", line_no),
               parse_double(tokens[4], "qx", line_no),
               parse_double(tokens[5], "qy", line_no),
               parse_double(tokens[6], "qz", line_no));
    out.push_back(r);
  }
  return out;
}

Se3Alignment align_se3(const std::vector<Vec3>& est,
                       const std::vector<Vec3>& ref) {
  if (est.size() != ref.size() || est.size() < 3) {
    throw InsufficientOverlap("need at least 3 paired positions");
  }
  Vec3 mu_e = Vec3::Zero(), mu_r = Vec3::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    mu_e += est[i];
    mu_r += ref[i];
  }
  mu_e /= static_cast<double>(est.size());
  mu_r /= static_cast<double>(ref.size());

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    h += (est[i] - mu_e) * (ref[i] - mu_r).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0
                ? -1.0
                : 1.0;
  Se3Alignment a;
  a.R = svd.matrixV() * d * svd.matrixU().transpose();
  a.t = mu_r - a.R * mu_e;
  return a;
}

namespace {

struct Associated {
  std::vector<Vec3> est;
  std::vector<Vec3> ref;
  std::vector<std::size_t> est_index;
};

Associated associate(const std::vector<TrajectoryRecord>& est,
                     const std::vector<TrajectoryRecord>& gt, double max_dt) {
  auto by_time = [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
    return a.t < b.t;
  };
  std::vector<TrajectoryRecord> e = est, g = gt;
  std::sort(e.begin(), e.end(), by_time);
  std::sort(g.begin(), g.end(), by_time);

  Associated out;
  std::size_t j = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    while (j + 1 < g.size() &&
           std::abs(g[j + 1].t - e[i].t) <= std::abs(g[j].t - e[i].t)) {
      ++j;
    }
    if (j < g.size() && std::abs(g[j].t - e[i].t) <= max_dt) {
      out.est.push_back(e[i].p);
      out.ref.push_back(g[j].p);
      out.est_index.push_back(i);
    }
  }
  if (out.est.size() < 3) {
    throw InsufficientOverlap("fewer than 3 temporally associated pairs");
  }
  return out;
}

}  // namespace

double ate_rmse(const std::vector<TrajectoryRecord>& est,
                const std::vector<TrajectoryRecord>& gt, double max_dt) {
  const Associated assoc = associate(est, gt, max_dt);
  const Se3Alignment a = align_se3(assoc.est, assoc.ref);
  double sum = 0.0;
  for (std::size_t i = 0; i < assoc.est.size(); ++i) {
    sum += (a.apply(assoc.est[i]) - assoc.ref[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(assoc.est.size()));
}

double aligned_final_error(const std::vector<TrajectoryRecord>& est,
                           const std::vector<TrajectoryRecord>& gt,
                           double max_dt) {
  const Associated assoc = associate(est, gt, max_dt);
  const Se3Alignment a = align_se3(assoc.est, assoc.ref);
  return (a.apply(assoc.est.back()) - assoc.ref.back()).norm();
}

double pose_nees(const SlidingWindowState& state, const Quat& q_true,
                 const Vec3& p_true) {
  const Quat dq = q_true * state.imu.q.conjugate();
  Vec3 dtheta = 2.0 * dq.vec();
  if (dq.w() < 0.0) dtheta = -dtheta;
  Eigen::Matrix<double, 6, 1> e;
  e << dtheta, (p_true - state.imu.p);
  const Mat6 p_pose = state.P.topLeftCorner<6, 6>();
  return e.dot(p_pose.ldlt().solve(e));
}

void write_tracks_csv(const std::vector<FrameInput>& frames,
                      const std::vector<PinholeCamera>& cameras,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "#timestamp [ns],landmark id,camera,u [px],v [px]\n";
  for (const FrameInput& frame : frames) {
    const long long t_ns = std::llround(frame.t * 1e9);
    for (const TrackObservation& tr : frame.tracks) {
      const Vec2 px =
          cameras.at(static_cast<std::size_t>(tr.camera)).pixel_from_normalized(tr.z);
      out << t_ns << ',' << tr.landmark_id << ',' << tr.camera << ','
          << format_fixed9(px.x()) << ',' << format_fixed9(px.y()) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<FrameInput> read_tracks_csv(
    const std::string& path, const std::vector<PinholeCamera>& cameras) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<FrameInput> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (is_header_or_blank(line)) continue;
    const auto tokens = split_csv(line);
    if (tokens.size() != 5) {
      throw MalformedRow("expected 5 columns at line " + std::to_string(line_no));
    }
    const double t = parse_double(tokens[0], "timestamp", line_no) * 1e-9;
    TrackObservation tr;
    tr.landmark_id =
        static_cast<std::int64_t>(parse_double(tokens[1], "id", line_no));
    tr.camera = static_cast<int>(parse_double(tokens[2], "camera", line_no));
    const Vec2 px(parse_double(tokens[3], "u", line_no),
                  parse_double(tokens[4], "v", line_no));
    tr.z = cameras.at(static_cast<std::size_t>(tr.camera)).normalized_from_pixel(px);
    if (out.empty() || std::abs(out.back().t - t) > 1e-9) {
      out.push_back(FrameInput{t, {}});
    }
    out.back().tracks.push_back(tr);
  }
  return out;
}

void write_euroc_layout(const SimOutput& sim, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(dir) / "mav0";
  fs::create_directories(base / "imu0");
  fs::create_directories(base / "state_groundtruth_estimate0");
  fs::create_directories(base / "tracks0");

  {
    std::ofstream out(base / "imu0" / "data.csv");
    if (!out) throw IoError("cannot write imu0/data.csv");
    out << "#timestamp [ns],w_RS_S_x [rad s^-1],w_RS_S_y [rad s^-1],"
           "w_RS_S_z [rad s^-1],a_RS_S_x [m s^-2],a_RS_S_y [m s^-2],"
           "a_RS_S_z [m s^-2]\n";
    for (const ImuSample& s : sim.imu) {
      out << std::llround(s.t * 1e9);
      for (const double v : {s.omega.x(), s.omega.y(), s.omega.z(), s.acc.x(),
                             s.acc.y(), s.acc.z()}) {
        out << ',' << format_fixed9(v);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(base / "state_groundtruth_estimate0" / "data.csv");
    if (!out) throw IoError("cannot write groundtruth data.csv");
    out << "#timestamp,p_RS_R_x [m],p_RS_R_y [m],p_RS_R_z [m],q_RS_w [],"
           "q_RS_x [],q_RS_y [],q_RS_z [],v_RS_R_x [m s^-1],v_RS_R_y [m s^-1],"
           "v_RS_R_z [m s^-1],b_w_RS_S_x [rad s^-1],b_w_RS_S_y [rad s^-1],"
           "b_w_RS_S_z [rad s^-1],b_a_RS_S_x [m s^-2],b_a_RS_S_y [m s^-2],"
           "b_a_RS_S_z [m s^-2]\n";
    for (const GroundTruthPose& g : sim.gt_imu_rate) {
      out << std::llround(g.t * 1e9);
      for (const double v :
           {g.p.x(), g.p.y(), g.p.z(), g.q.w(), g.q.x(), g.q.y(), g.q.z(),
            g.v.x(), g.v.y(), g.v.z(), sim.config.bias_g_true.x(),
            sim.config.bias_g_true.y(), sim.config.bias_g_true.z(),
            sim.config.bias_a_true.x(), sim.config.bias_a_true.y(),
            sim.config.bias_a_true.z()}) {
        out << ',' << format_fixed9(v);
      }
      out << '\n';
    }
  }
  write_tracks_csv(sim.frames, sim.config.cameras,
                   (base / "tracks0" / "data.csv").string());
}

EurocData read_euroc_layout(const std::string& dir,
                            const std::vector<PinholeCamera>& cameras) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(dir) / "mav0";
  EurocData data;
  data.imu = read_imu_csv((base / "imu0" / "data.csv").string());
  data.gt = read_groundtruth_csv(
      (base / "state_groundtruth_estimate0" / "data.csv").string());
  const fs::path tracks = base / "tracks0" / "data.csv";
  if (fs::exists(tracks)) {
    data.frames = read_tracks_csv(tracks.string(), cameras);
  }
  return data;
}

// --- config serialization ----------------------------------------------

namespace {

using nlohmann::json;

json camera_to_json(const PinholeCamera& cam) {
  json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["R_ic"] = std::vector<double>(cam.R_ic.data(), cam.R_ic.data() + 9);
  j["p_ic"] = {cam.p_ic.x(), cam.p_ic.y(), cam.p_ic.z()};
  return j;
}

PinholeCamera camera_from_json(const json& j) {
  PinholeCamera cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto r = j.at("R_ic").get<std::vector<double>>();
  if (r.size() != 9) throw InvalidConfig("R_ic must have 9 entries");
  cam.R_ic = Eigen::Map<const Mat3>(r.data());
  const auto p = j.at("p_ic").get<std::vector<double>>();
  if (p.size() != 3) throw InvalidConfig("p_ic must have 3 entries");
  cam.p_ic = Vec3(p[0], p[1], p[2]);
  return cam;
}

json noise_to_json(const NoiseParams& n) {
  json j;
  j["sigma_g"] = n.sigma_g;
  j["sigma_a"] = n.sigma_a;
  j["sigma_bg"] = n.sigma_bg;
  j["sigma_ba"] = n.sigma_ba;
  j["gravity"] = {n.gravity.x(), n.gravity.y(), n.gravity.z()};
  return j;
}

NoiseParams noise_from_json(const json& j) {
  NoiseParams n;
  n.sigma_g = j.at("sigma_g").get<double>();
  n.sigma_a = j.at("sigma_a").get<double>();
  n.sigma_bg = j.at("sigma_bg").get<double>();
  n.sigma_ba = j.at("sigma_ba").get<double>();
  if (j.contains("gravity")) {
    const auto g = j.at("gravity").get<std::vector<double>>();
    if (g.size() != 3) throw InvalidConfig("gravity must have 3 entries");
    n.gravity = Vec3(g[0], g[1], g[2]);
  }
  if (!(n.sigma_g > 0.0) || !(n.sigma_a > 0.0) || !(n.sigma_bg > 0.0) ||
      !(n.sigma_ba > 0.0)) {
    throw InvalidConfig("noise sigmas must be positive");
  }
  return n;
}

const char* trajectory_name(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::Stationary: return "stationary";
    case TrajectoryKind::Circle: return "circle";
    case TrajectoryKind::Sine3d: return "sine-3d";
  }
  return "circle";
}

TrajectoryKind trajectory_from_name(const std::string& s) {
  if (s == "stationary") return TrajectoryKind::Stationary;
  if (s == "circle") return TrajectoryKind::Circle;
  if (s == "sine-3d") return TrajectoryKind::Sine3d;
  throw InvalidConfig("unknown trajectory kind: " + s);
}

}  // namespace

std::string config_to_json(const SimConfig& sim, const FilterConfig& filter) {
  json j;
  json& s = j["sim"];
  s["trajectory"] = trajectory_name(sim.trajectory);
  s["radius"] = sim.radius;
  s["angular_rate"] = sim.angular_rate;
  s["z_amplitude"] = sim.z_amplitude;
  s["z_rate"] = sim.z_rate;
  s["duration"] = sim.duration;
  s["imu_rate"] = sim.imu_rate;
  s["cam_rate"] = sim.cam_rate;
  s["field"] = sim.field == LandmarkField::Cylinder ? "cylinder" : "room";
  s["num_landmarks"] = sim.num_landmarks;
  s["field_radius"] = sim.field_radius;
  s["field_z_min"] = sim.field_z_min;
  s["field_z_max"] = sim.field_z_max;
  s["noise"] = noise_to_json(sim.noise);
  s["pixel_sigma"] = sim.pixel_sigma;
  s["bias_g_true"] = {sim.bias_g_true.x(), sim.bias_g_true.y(),
                      sim.bias_g_true.z()};
  s["bias_a_true"] = {sim.bias_a_true.x(), sim.bias_a_true.y(),
                      sim.bias_a_true.z()};
  s["outlier_rate"] = sim.outlier_rate;
  s["min_depth"] = sim.min_depth;
  s["seed"] = sim.seed;
  s["cameras"] = json::array();
  for (const PinholeCamera& cam : sim.cameras) {
    s["cameras"].push_back(camera_to_json(cam));
  }

  json& f = j["filter"];
  f["noise"] = noise_to_json(filter.noise);
  f["max_keyframe_clones"] = filter.max_keyframe_clones;
  f["max_temporal_clones"] = filter.max_temporal_clones;
  f["u"] = filter.u;
  f["chi2_confidence"] = filter.chi2_confidence;
  f["gating_enabled"] = filter.gating_enabled;
  f["triangulation_min_parallax_deg"] = filter.triangulation_min_parallax_deg;
  f["c3_eps"] = filter.c3_eps;
  f["keyframe"] = {{"parallax_px", filter.keyframe.parallax_px},
                   {"min_tracked_landmarks", filter.keyframe.min_tracked_landmarks},
                   {"max_rotation_gap", filter.keyframe.max_rotation_gap},
                   {"max_translation_gap", filter.keyframe.max_translation_gap}};
  f["init"] = {{"theta", filter.init.theta},
               {"p", filter.init.p},
               {"v", filter.init.v},
               {"ba", filter.init.ba},
               {"bg", filter.init.bg}};
  f["init_imu_samples"] = filter.init_imu_samples;
  f["reuse_window_observations"] = filter.reuse_window_observations;
  f["landmark_solver"] =
      filter.landmark_solver == LandmarkSolverKind::Ekf ? "ekf" : "gauss-newton";
  f["exec"] = filter.exec == ExecPolicy::Parallel ? "parallel" : "serial";
  f["cameras"] = json::array();
  for (const PinholeCamera& cam : filter.cameras) {
    f["cameras"].push_back(camera_to_json(cam));
  }
  return j.dump(2);
}

void config_from_json(const std::string& text, SimConfig* sim,
                      FilterConfig* filter) {
  const json j = json::parse(text);
  static const std::vector<std::string> sim_keys = {
      "trajectory", "radius", "angular_rate", "z_amplitude", "z_rate",
      "duration", "imu_rate", "cam_rate", "field", "num_landmarks",
      "field_radius", "field_z_min", "field_z_max", "noise", "pixel_sigma",
      "bias_g_true", "bias_a_true", "outlier_rate", "min_depth", "seed",
      "cameras"};
  static const std::vector<std::string> filter_keys = {
      "noise", "max_keyframe_clones", "max_temporal_clones", "u",
      "chi2_confidence", "gating_enabled", "triangulation_min_parallax_deg",
      "c3_eps", "keyframe", "init", "init_imu_samples",
      "reuse_window_observations", "landmark_solver", "exec", "cameras"};

  if (sim != nullptr && j.contains("sim")) {
    const json& s = j.at("sim");
    for (const auto& [key, value] : s.items()) {
      (void)value;
      if (std::find(sim_keys.begin(), sim_keys.end(), key) == sim_keys.end()) {
        throw InvalidConfig("unknown sim config key: " + key);
      }
    }
    if (s.contains("trajectory")) {
      sim->trajectory = trajectory_from_name(s.at("trajectory").get<std::string>());
    }
    if (s.contains("radius")) sim->radius = s.at("radius").get<double>();
    if (s.contains("angular_rate")) sim->angular_rate = s.at("angular_rate").get<double>();
    if (s.contains("z_amplitude")) sim->z_amplitude = s.at("z_amplitude").get<double>();
    if (s.contains("z_rate")) sim->z_rate = s.at("z_rate").get<double>();
    if (s.contains("duration")) sim->duration = s.at("duration").get<double>();
    if (s.contains("imu_rate")) sim->imu_rate = s.at("imu_rate").get<double>();
    if (s.contains("cam_rate")) sim->cam_rate = s.at("cam_rate").get<double>();
    if (s.contains("field")) {
      const std::string f = s.at("field").get<std::string>();
      if (f == "cylinder") sim->field = LandmarkField::Cylinder;
      else if (f == "room") sim->field = LandmarkField::Room;
      else throw InvalidConfig("unknown field kind: " + f);
    }
    if (s.contains("num_landmarks")) sim->num_landmarks = s.at("num_landmarks").get<int>();
    if (s.contains("field_radius")) sim->field_radius = s.at("field_radius").get<double>();
    if (s.contains("field_z_min")) sim->field_z_min = s.at("field_z_min").get<double>();
    if (s.contains("field_z_max")) sim->field_z_max = s.at("field_z_max").get<double>();
    if (s.contains("noise")) sim->noise = noise_from_json(s.at("noise"));
    if (s.contains("pixel_sigma")) sim->pixel_sigma = s.at("pixel_sigma").get<double>();
    if (s.contains("bias_g_true")) {
      const auto b = s.at("bias_g_true").get<std::vector<double>>();
      sim->bias_g_true = Vec3(b.at(0), b.at(1), b.at(2));
    }
    if (s.contains("bias_a_true")) {
      const auto b = s.at("bias_a_true").get<std::vector<double>>();
      sim->bias_a_true = Vec3(b.at(0), b.at(1), b.at(2));
    }
    if (s.contains("outlier_rate")) sim->outlier_rate = s.at("outlier_rate").get<double>();
    if (s.contains("min_depth")) sim->min_depth = s.at("min_depth").get<double>();
    if (s.contains("seed")) sim->seed = s.at("seed").get<std::uint64_t>();
    if (s.contains("cameras")) {
      sim->cameras.clear();
      for (const json& c : s.at("cameras")) sim->cameras.push_back(camera_from_json(c));
    }
  }

  if (filter != nullptr && j.contains("filter")) {
    const json& f = j.at("filter");
    for (const auto& [key, value] : f.items()) {
      (void)value;
      if (std::find(filter_keys.begin(), filter_keys.end(), key) ==
          filter_keys.end()) {
        throw InvalidConfig("unknown filter config key: " + key);
      }
    }
    if (f.contains("noise")) filter->noise = noise_from_json(f.at("noise"));
    if (f.contains("max_keyframe_clones")) filter->max_keyframe_clones = f.at("max_keyframe_clones").get<int>();
    if (f.contains("max_temporal_clones")) filter->max_temporal_clones = f.at("max_temporal_clones").get<int>();
    if (f.contains("u")) filter->u = f.at("u").get<double>();
    if (f.contains("chi2_confidence")) filter->chi2_confidence = f.at("chi2_confidence").get<double>();
    if (f.contains("gating_enabled")) filter->gating_enabled = f.at("gating_enabled").get<bool>();
    if (f.contains("triangulation_min_parallax_deg")) {
      filter->triangulation_min_parallax_deg =
          f.at("triangulation_min_parallax_deg").get<double>();
    }
    if (f.contains("c3_eps")) filter->c3_eps = f.at("c3_eps").get<double>();
    if (f.contains("keyframe")) {
      const json& k = f.at("keyframe");
      if (k.contains("parallax_px")) filter->keyframe.parallax_px = k.at("parallax_px").get<double>();
      if (k.contains("min_tracked_landmarks")) filter->keyframe.min_tracked_landmarks = k.at("min_tracked_landmarks").get<int>();
      if (k.contains("max_rotation_gap")) filter->keyframe.max_rotation_gap = k.at("max_rotation_gap").get<double>();
      if (k.contains("max_translation_gap")) filter->keyframe.max_translation_gap = k.at("max_translation_gap").get<double>();
    }
    if (f.contains("init")) {
      const json& i = f.at("init");
      if (i.contains("theta")) filter->init.theta = i.at("theta").get<double>();
      if (i.contains("p")) filter->init.p = i.at("p").get<double>();
      if (i.contains("v")) filter->init.v = i.at("v").get<double>();
      if (i.contains("ba")) filter->init.ba = i.at("ba").get<double>();
      if (i.contains("bg")) filter->init.bg = i.at("bg").get<double>();
    }
    if (f.contains("init_imu_samples")) filter->init_imu_samples = f.at("init_imu_samples").get<int>();
    if (f.contains("reuse_window_observations")) filter->reuse_window_observations = f.at("reuse_window_observations").get<bool>();
    if (f.contains("landmark_solver")) {
      const std::string s = f.at("landmark_solver").get<std::string>();
      if (s == "ekf") filter->landmark_solver = LandmarkSolverKind::Ekf;
      else if (s == "gauss-newton") filter->landmark_solver = LandmarkSolverKind::GaussNewton;
      else throw InvalidConfig("unknown landmark solver: " + s);
    }
    if (f.contains("exec")) {
      const std::string s = f.at("exec").get<std::string>();
      if (s == "parallel") filter->exec = ExecPolicy::Parallel;
      else if (s == "serial") filter->exec = ExecPolicy::Serial;
      else throw InvalidConfig("unknown exec policy: " + s);
    }
    if (f.contains("cameras")) {
      filter->cameras.clear();
      for (const json& c : f.at("cameras")) filter->cameras.push_back(camera_from_json(c));
    }
  }
}

void load_config_file(const std::string& path, SimConfig* sim,
                      FilterConfig* filter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  config_from_json(buffer.str(), sim, filter);
}

}  // namespace svio
