#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svio/evalio.hpp"
#include "svio/filter.hpp"
#include "svio/simulator.hpp"

namespace svio {

struct RunResult {
  std::vector<TrajectoryRecord> estimate;
  std::vector<TrajectoryRecord> ground_truth;
  std::vector<FilterReport> reports;
  std::vector<double> nees;  // per processed frame
  double ate = 0.0;
  double final_error_aligned = 0.0;
  double mean_nees = 0.0;
};

/// Runs the filter over a generated simulation. The initial state is ground
/// truth perturbed per `perturb` (pass all-zero sigmas for a perfect init);
/// P0 matches the perturbation.
RunResult run_simulation(const SimOutput& sim, const FilterConfig& config,
                         const PerturbSigmas& perturb, std::uint64_t seed);

/// Semi-synthetic dataset run: real (or persisted) IMU stream plus feature
/// tracks synthesized by projecting a seeded landmark field onto the
/// ground-truth poses. Used for EuRoC-layout datasets, where the image
/// stream is not processed.
struct SemiSyntheticParams {
  int num_landmarks = 400;
  double pixel_sigma = 1.0;
  double max_duration = 1e9;  // s, truncate long sequences
  std::uint64_t seed = 1;
};

RunResult run_semisynthetic(const EurocData& data, const FilterConfig& config,
                            const SemiSyntheticParams& params);

}  // namespace svio
