#include "app_config.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <variant>
#include <vector>

#include <yaml-cpp/yaml.h>

namespace gedf::cli {

namespace {

using Slot = std::variant<double*, int*, bool*, Eigen::Vector3d*, Eigen::Quaterniond*>;
using SectionTable = std::map<std::string, std::map<std::string, Slot>>;

SectionTable bind(AppConfig& c) {
  FitConfig& f = c.map.fit;
  RegistrationConfig& r = c.localization.registration;
  EskfConfig& e = c.localization.eskf;
  LocalizationConfig& l = c.localization;
  SimulationConfig& s = c.simulation;
  return {
      {"map",
       {{"block_size", &c.map.block_size},
        {"overlap_margin", &c.map.overlap_margin},
        {"activation_distance", &c.map.activation_distance},
        {"edt_voxel_size", &c.map.edt_voxel_size},
        {"edt_halo", &c.map.edt_halo}}},
      {"fit",
       {{"mae_tolerance", &f.mae_tolerance},
        {"max_kernels", &f.max_kernels},
        {"kernel_increment", &f.kernel_increment},
        {"initial_kernels_empty", &f.initial_kernels_empty},
        {"initial_kernels_surface", &f.initial_kernels_surface},
        {"max_lm_iterations", &f.max_lm_iterations},
        {"lm_initial_damping", &f.lm_initial_damping},
        {"min_length_scale", &f.length_scale_bounds.min},
        {"max_length_scale", &f.length_scale_bounds.max},
        {"initial_length_scale", &f.initial_length_scale},
        {"growth_length_scale", &f.growth_length_scale},
        {"minimum_seed_weight", &f.minimum_seed_weight},
        {"prune_weight", &f.prune_weight}}},
      {"registration",
       {{"coarse_cauchy_scale", &r.coarse_cauchy_scale},
        {"fine_cauchy_scale", &r.fine_cauchy_scale},
        {"max_iterations", &r.max_iterations},
        {"function_tolerance", &r.function_tolerance},
        {"step_tolerance", &r.step_tolerance},
        {"min_valid_fraction", &r.min_valid_fraction}}},
      {"eskf",
       {{"accel_noise", &e.noise.accel_noise},
        {"gyro_noise", &e.noise.gyro_noise},
        {"accel_bias_walk", &e.noise.accel_bias_walk},
        {"gyro_bias_walk", &e.noise.gyro_bias_walk},
        {"gravity", &e.gravity},
        {"innovation_gate", &e.innovation_gate},
        {"position_sigma", &e.position_sigma},
        {"rotation_sigma", &e.rotation_sigma},
        {"extrinsic_translation", &e.extrinsic.translation},
        {"extrinsic_rotation", &e.extrinsic.rotation}}},
      {"localization",
       {{"scan_voxel_size", &l.scan_voxel_size},
        {"initial_position_sigma", &l.initial_position_sigma},
        {"initial_velocity_sigma", &l.initial_velocity_sigma},
        {"initial_rotation_sigma", &l.initial_rotation_sigma},
        {"initial_accel_bias_sigma", &l.initial_accel_bias_sigma},
        {"initial_gyro_bias_sigma", &l.initial_gyro_bias_sigma}}},
      {"eval",
       {{"probe_step", &c.eval.probe_step},
        {"outlier_trim", &c.eval.outlier_trim},
        {"min_truth_distance", &c.eval.min_truth_distance}}},
      {"simulation",
       {{"scan_count", &s.scan_count},
        {"sweep_period", &s.sweep_period},
        {"imu_rate", &s.imu_rate},
        {"rings", &s.rings},
        {"azimuth_steps", &s.azimuth_steps},
        {"min_elevation_deg", &s.min_elevation_deg},
        {"max_elevation_deg", &s.max_elevation_deg},
        {"distort", &s.distort},
        {"range_noise", &s.range_noise},
        {"loop_center", &s.trajectory.center},
        {"loop_radius", &s.trajectory.radius},
        {"loop_period", &s.trajectory.period},
        {"loop_height_amplitude", &s.trajectory.height_amplitude},
        {"loop_yaw_offset", &s.trajectory.yaw_offset},
        {"loop_yaw_amplitude", &s.trajectory.yaw_amplitude},
        {"loop_pitch_amplitude", &s.trajectory.pitch_amplitude},
        {"loop_roll_amplitude", &s.trajectory.roll_amplitude}}},
  };
}

std::vector<double> read_list(const YAML::Node& node, std::size_t n, const std::string& name) {
  if (!node.IsSequence() || node.size() != n) {
    throw std::invalid_argument("config key '" + name + "' expects a list of " + std::to_string(n) +
                                " numbers");
  }
  std::vector<double> v;
  for (const auto& item : node) v.push_back(item.as<double>());
  return v;
}

void assign(const YAML::Node& node, const Slot& slot, const std::string& name) {
  try {
    std::visit(
        [&](auto* target) {
          using T = std::remove_pointer_t<decltype(target)>;
          if constexpr (std::is_same_v<T, Eigen::Vector3d>) {
            const auto v = read_list(node, 3, name);
            *target = Eigen::Vector3d(v[0], v[1], v[2]);
          } else if constexpr (std::is_same_v<T, Eigen::Quaterniond>) {
            const auto v = read_list(node, 4, name);
            Eigen::Quaterniond q(v[3], v[0], v[1], v[2]);
            if (std::abs(q.norm() - 1.0) > 1e-3) {
              throw std::invalid_argument("config key '" + name + "' is not a unit quaternion");
            }
            *target = q.normalized();
          } else {
            *target = node.as<T>();
          }
        },
        slot);
  } catch (const YAML::Exception&) {
    throw std::invalid_argument("config key '" + name + "' has a malformed value");
  }
}

}  // namespace

void AppConfig::validate() const {
  map.validate();
  localization.registration.validate();
  if (!(localization.scan_voxel_size > 0.0)) {
    throw std::invalid_argument("localization: scan_voxel_size must be > 0");
  }
  if (!(localization.eskf.innovation_gate > 0.0)) {
    throw std::invalid_argument("eskf: innovation_gate must be > 0");
  }
  if (!(eval.probe_step > 0.0)) throw std::invalid_argument("eval: probe_step must be > 0");
  if (!(eval.outlier_trim >= 0.0 && eval.outlier_trim < 1.0)) {
    throw std::invalid_argument("eval: outlier_trim must be in [0, 1)");
  }
  if (simulation.scan_count < 1 || !(simulation.sweep_period > 0.0) ||
      !(simulation.imu_rate > 0.0) || simulation.rings < 1 || simulation.azimuth_steps < 1) {
    throw std::invalid_argument("simulation: counts, period and rates must be positive");
  }
}

AppConfig parse_config(const std::string& yaml_text) {
  AppConfig cfg;
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("config is not valid YAML: ") + e.what());
  }
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) throw std::invalid_argument("config root must be a mapping");
  const SectionTable table = bind(cfg);
  for (const auto& section : root) {
    const auto name = section.first.as<std::string>();
    const auto it = table.find(name);
    if (it == table.end()) throw std::invalid_argument("unknown config section '" + name + "'");
    if (!section.second.IsMap()) {
      throw std::invalid_argument("config section '" + name + "' must be a mapping");
    }
    for (const auto& entry : section.second) {
      const auto key = entry.first.as<std::string>();
      const auto slot = it->second.find(key);
      if (slot == it->second.end()) {
        throw std::invalid_argument("unknown config key '" + name + "." + key + "'");
      }
      assign(entry.second, slot->second, name + "." + key);
    }
  }
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("input not found: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

nlohmann::json to_json(const AppConfig& cfg) {
  AppConfig copy = cfg;
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [section, keys] : bind(copy)) {
    nlohmann::json& sec = out[section];
    for (const auto& [key, slot] : keys) {
      std::visit(
          [&](auto* value) {
            using T = std::remove_pointer_t<decltype(value)>;
            if constexpr (std::is_same_v<T, Eigen::Vector3d>) {
              sec[key] = {value->x(), value->y(), value->z()};
            } else if constexpr (std::is_same_v<T, Eigen::Quaterniond>) {
              sec[key] = {value->x(), value->y(), value->z(), value->w()};
            } else {
              sec[key] = *value;
            }
          },
          slot);
    }
  }
  return out;
}

}  // namespace gedf::cli
