#pragma once

#include <string>

#include "json.hpp"

#include "gedf/lidar_sim.hpp"
#include "gedf/registration.hpp"
#include "gedf/sparse_map.hpp"

namespace gedf::cli {

struct EvalConfig {
  double probe_step = 0.3;
  double outlier_trim = 1e-4;
  double min_truth_distance = 0.0;
};

struct SimulationConfig {
  int scan_count = 200;
  double sweep_period = 0.1;
  double imu_rate = 200.0;
  int rings = 16;
  int azimuth_steps = 360;
  double min_elevation_deg = -40.0;
  double max_elevation_deg = 40.0;
  bool distort = true;
  double range_noise = 0.0;
  LoopTrajectory trajectory;
};

/// Every tunable of every module, loaded from one YAML file.
struct AppConfig {
  MapConfig map;
  LocalizationConfig localization;
  EvalConfig eval;
  SimulationConfig simulation;

  /// Throws std::invalid_argument when any section is inconsistent.
  void validate() const;
};

/// Reads a YAML config; unknown keys and malformed values throw
/// std::invalid_argument naming the offending key.
AppConfig load_config(const std::string& path);
AppConfig parse_config(const std::string& yaml_text);

nlohmann::json to_json(const AppConfig& cfg);

}  // namespace gedf::cli
