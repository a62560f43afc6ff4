#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"

#include "app_config.hpp"
#include "manifest.hpp"
#include "version.hpp"

#include "gedf/lidar_sim.hpp"
#include "gedf/map_serde.hpp"
#include "gedf/pointcloud_io.hpp"
#include "gedf/registration.hpp"
#include "gedf/scene.hpp"
#include "gedf/sparse_map.hpp"

namespace gedf::cli {
namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Common {
  std::string config_path;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out;
  std::string manifest;
  std::vector<std::string> argv;
};

AppConfig load_app_config(const Common& c) {
  return c.config_path.empty() ? AppConfig{} : load_config(c.config_path);
}

std::string manifest_path(const Common& c, const std::string& verb) {
  if (!c.manifest.empty()) return c.manifest;
  if (!c.out.empty()) return c.out + ".manifest.json";
  return "gedf-" + verb + ".manifest.json";
}

RunManifest start_manifest(const Common& c, const std::string& verb, const AppConfig& cfg) {
  RunManifest m(verb, c.argv);
  m.set_seed(c.seed);
  m.set_threads(c.threads > 0 ? c.threads : omp_get_max_threads());
  m.set_config(to_json(cfg));
  if (!c.config_path.empty()) m.add_input("config", c.config_path);
  return m;
}

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("input not found: " + path);
}

// ---------------------------------------------------------------- build

struct BuildArgs {
  std::string scene;
  std::string cloud;
  double downsample = 0.0;
  std::optional<double> block_size, overlap, activation, voxel, tolerance;
  std::optional<int> max_kernels;
  bool strict = false;
};

int cmd_build(const Common& c, const BuildArgs& a) {
  AppConfig cfg = load_app_config(c);
  if (a.block_size) cfg.map.block_size = *a.block_size;
  if (a.overlap) cfg.map.overlap_margin = *a.overlap;
  if (a.activation) cfg.map.activation_distance = *a.activation;
  if (a.voxel) cfg.map.edt_voxel_size = *a.voxel;
  if (a.tolerance) cfg.map.fit.mae_tolerance = *a.tolerance;
  if (a.max_kernels) cfg.map.fit.max_kernels = *a.max_kernels;
  cfg.validate();

  RunManifest m = start_manifest(c, "build", cfg);
  std::vector<Eigen::Vector3d> points;
  if (!a.scene.empty()) {
    require_file(a.scene);
    points = generate_scene(Scene::load(a.scene));
    m.add_input("scene", a.scene);
  } else {
    require_file(a.cloud);
    points = load_cloud(a.cloud);
    m.add_input("cloud", a.cloud);
  }
  if (a.downsample > 0.0) points = voxel_downsample(points, a.downsample);
  if (points.empty()) throw std::runtime_error("input cloud is empty");
  m.parameters()["downsample"] = a.downsample;

  BuildReport report;
  const auto t0 = Clock::now();
  const SparseGmmMap map = build_map(points, cfg.map, &report);
  const double build_seconds = seconds_since(t0);
  const std::size_t bytes = save_map(map, c.out);

  std::printf("points: %zu\n", points.size());
  std::printf("blocks: %zu\n", map.blocks().size());
  std::printf("total_kernels: %zu\n", map.total_kernels());
  std::printf("unconverged_blocks: %zu\n", report.unconverged_blocks);
  std::printf("global_mae: %.6f\n", map.global_mae());
  std::printf("bytes: %zu\n", bytes);
  std::printf("raw_point_bytes: %zu\n", points.size() * 3 * sizeof(float));
  std::printf("build_seconds: %.3f\n", build_seconds);

  m.results() = {{"points", points.size()},
                 {"blocks", map.blocks().size()},
                 {"total_kernels", map.total_kernels()},
                 {"unconverged_blocks", report.unconverged_blocks},
                 {"global_mae", map.global_mae()},
                 {"bytes", bytes}};
  m.set_timing("build_seconds", build_seconds);
  m.add_output("map", c.out);
  m.write(manifest_path(c, "build"));
  if (a.strict && report.unconverged_blocks > 0) {
    throw NumericalError(std::to_string(report.unconverged_blocks) + " blocks did not converge");
  }
  return kOk;
}

// ---------------------------------------------------------------- query

struct QueryArgs {
  std::string map;
  std::string points;
  std::vector<double> xyz;
};

int cmd_query(const Common& c, const QueryArgs& a) {
  const AppConfig cfg = load_app_config(c);
  require_file(a.map);
  RunManifest m = start_manifest(c, "query", cfg);
  const SparseGmmMap map = load_map(a.map);
  m.add_input("map", a.map);

  std::vector<Eigen::Vector3d> xs;
  if (!a.points.empty()) {
    require_file(a.points);
    xs = load_cloud(a.points);
    m.add_input("points", a.points);
  } else {
    xs.emplace_back(a.xyz[0], a.xyz[1], a.xyz[2]);
  }
  const auto samples = map.query_batch(xs);

  std::ofstream file;
  if (!c.out.empty()) {
    file.open(c.out);
    if (!file) throw std::runtime_error("cannot write " + c.out);
  }
  std::ostream& out = c.out.empty() ? std::cout : file;
  out << "x,y,z,d,gx,gy,gz,valid\n";
  char line[512];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const FieldSample& s = samples[i];
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", xs[i].x(),
                  xs[i].y(), xs[i].z(), s.value, s.gradient.x(), s.gradient.y(), s.gradient.z(),
                  s.valid ? 1 : 0);
    out << line;
  }
  out.flush();
  if (file.is_open()) {
    file.close();
    m.add_output("query_csv", c.out);
  }
  m.results()["queries"] = xs.size();
  m.write(manifest_path(c, "query"));
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string map;
  std::string truth;
  std::string scene;
  std::optional<double> probe_step, trim, min_distance;
  std::optional<double> slice_z;
  double slice_step = 0.05;
  std::string slice_out;
};

void print_metrics_table(const ReconstructionMetrics& r) {
  std::printf("%-10s %-10s %-10s %-10s %-10s %-8s\n", "mae", "median", "std", "grad_mean",
              "grad_std", "probes");
  std::printf("%-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-8zu\n", r.mae, r.median, r.std,
              r.grad_mean, r.grad_std, r.probes);
}

void write_slice(const SparseGmmMap& map, double z, double step, const DistanceFn* truth,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "x,y,z,d,grad_norm,valid" << (truth ? ",true_d" : "") << "\n";
  const Eigen::AlignedBox3d& b = map.bounds();
  const auto nx = static_cast<long>(std::floor((b.max().x() - b.min().x()) / step)) + 1;
  const auto ny = static_cast<long>(std::floor((b.max().y() - b.min().y()) / step)) + 1;
  char line[256];
  for (long j = 0; j < ny; ++j) {
    for (long i = 0; i < nx; ++i) {
      const Eigen::Vector3d x(b.min().x() + i * step, b.min().y() + j * step, z);
      const FieldSample s = map.query(x);
      std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f,%.6f,%.6f,%d", x.x(), x.y(), x.z(),
                    s.value, s.gradient.norm(), s.valid ? 1 : 0);
      out << line;
      if (truth) {
        std::snprintf(line, sizeof(line), ",%.6f", (*truth)(x));
        out << line;
      }
      out << "\n";
    }
  }
}

int cmd_eval(const Common& c, const EvalArgs& a) {
  AppConfig cfg = load_app_config(c);
  if (a.probe_step) cfg.eval.probe_step = *a.probe_step;
  if (a.trim) cfg.eval.outlier_trim = *a.trim;
  if (a.min_distance) cfg.eval.min_truth_distance = *a.min_distance;
  cfg.validate();
  if (a.slice_z && !(a.slice_step > 0.0)) throw std::invalid_argument("slice step must be > 0");

  require_file(a.map);
  RunManifest m = start_manifest(c, "eval", cfg);
  const SparseGmmMap map = load_map(a.map);
  m.add_input("map", a.map);
  m.parameters() = {{"probe_step", cfg.eval.probe_step},
                    {"outlier_trim", cfg.eval.outlier_trim},
                    {"min_truth_distance", cfg.eval.min_truth_distance}};

  EvalOptions opts;
  opts.probe_step = cfg.eval.probe_step;
  opts.outlier_trim = cfg.eval.outlier_trim;
  opts.min_truth_distance = cfg.eval.min_truth_distance;

  std::optional<Scene> scene;
  std::vector<Eigen::Vector3d> truth_points;
  DistanceFn truth;
  if (!a.scene.empty()) {
    require_file(a.scene);
    scene = Scene::load(a.scene);
    m.add_input("scene", a.scene);
    truth = [&scene](const Eigen::Vector3d& x) { return scene->distance(x); };
  } else {
    require_file(a.truth);
    truth_points = load_cloud(a.truth);
    if (truth_points.empty()) throw std::runtime_error("truth cloud is empty");
    m.add_input("truth", a.truth);
  }

  const auto t0 = Clock::now();
  ReconstructionMetrics r;
  try {
    r = scene ? eval_reconstruction(map, truth, opts) : eval_reconstruction(map, truth_points, opts);
  } catch (const std::runtime_error& e) {
    throw NumericalError(e.what());
  }
  m.set_timing("eval_seconds", seconds_since(t0));
  print_metrics_table(r);
  m.results() = {{"mae", r.mae},           {"median", r.median},     {"std", r.std},
                 {"grad_mean", r.grad_mean}, {"grad_std", r.grad_std}, {"probes", r.probes},
                 {"trimmed", r.trimmed}};

  if (!c.out.empty()) {
    std::ofstream out(c.out);
    if (!out) throw std::runtime_error("cannot write " + c.out);
    out << "mae,median,std,grad_mean,grad_std,probes,trimmed\n";
    out.precision(9);
    out << r.mae << ',' << r.median << ',' << r.std << ',' << r.grad_mean << ',' << r.grad_std
        << ',' << r.probes << ',' << r.trimmed << '\n';
    out.close();
    m.add_output("metrics_csv", c.out);
  }
  if (a.slice_z) {
    const std::string path = a.slice_out.empty() ? "slice.csv" : a.slice_out;
    write_slice(map, *a.slice_z, a.slice_step, scene ? &truth : nullptr, path);
    m.add_output("slice_csv", path);
  }
  m.write(manifest_path(c, "eval"));
  return kOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string scene;
  std::optional<int> scans;
};

SequenceOptions sequence_options(const SimulationConfig& s, std::uint64_t seed) {
  SequenceOptions o;
  o.scan_count = s.scan_count;
  o.sweep_period = s.sweep_period;
  o.imu_rate = s.imu_rate;
  o.distort = s.distort;
  o.pattern = RayPattern::spinning(s.rings, s.azimuth_steps, s.min_elevation_deg, s.max_elevation_deg);
  o.noise = ScanNoise{s.range_noise, seed};
  return o;
}

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  AppConfig cfg = load_app_config(c);
  if (a.scans) cfg.simulation.scan_count = *a.scans;
  cfg.validate();
  require_file(a.scene);
  RunManifest m = start_manifest(c, "simulate", cfg);
  m.add_input("scene", a.scene);
  const Scene scene = Scene::load(a.scene);
  SimulationConfig sim = cfg.simulation;
  if (scene.range_noise > 0.0 && sim.range_noise == 0.0) sim.range_noise = scene.range_noise;

  const auto t0 = Clock::now();
  const SyntheticSequence seq = simulate_sequence(scene, sim.trajectory, sequence_options(sim, c.seed));
  const std::string scans = c.out + ".scans";
  const std::string imu = c.out + ".imu";
  const std::string truth = c.out + ".truth.tum";
  const std::string cloud = c.out + ".cloud.xyz";
  save_scans(scans, seq.scans);
  save_imu(imu, seq.imu);
  save_trajectory(truth, seq.truth);
  save_cloud_xyz(cloud, generate_scene(scene));
  m.set_timing("simulate_seconds", seconds_since(t0));

  std::size_t points = 0;
  for (const Scan& s : seq.scans) points += s.points.size();
  std::printf("scans: %zu\nimu_samples: %zu\nmean_points_per_scan: %.1f\n", seq.scans.size(),
              seq.imu.size(), static_cast<double>(points) / seq.scans.size());
  m.results() = {{"scans", seq.scans.size()}, {"imu_samples", seq.imu.size()}};
  m.add_output("scans", scans);
  m.add_output("imu", imu);
  m.add_output("truth", truth);
  m.add_output("cloud", cloud);
  m.write(manifest_path(c, "simulate"));
  return kOk;
}

// ---------------------------------------------------------------- localize

struct LocalizeArgs {
  std::string map;
  std::string scans;
  std::string imu;
  std::string truth;
  std::string setup = "inertial";
  std::optional<double> sigma_t, sigma_yaw;
  std::vector<double> initial;
};

LocalizationSetup parse_setup(const LocalizeArgs& a) {
  if (a.setup == "inertial") return LocalizationSetup::inertial();
  if (a.setup == "noimu") return LocalizationSetup::no_imu();
  if (a.setup == "low") return LocalizationSetup::low_noise();
  if (a.setup == "high") return LocalizationSetup::high_noise();
  if (a.setup == "noise") {
    if (!a.sigma_t || !a.sigma_yaw) {
      throw UsageError("--setup noise requires --sigma-t and --sigma-yaw");
    }
    if (*a.sigma_t < 0.0 || *a.sigma_yaw < 0.0) throw UsageError("noise sigmas must be >= 0");
    return LocalizationSetup::noise(*a.sigma_t, *a.sigma_yaw);
  }
  throw UsageError("unknown setup '" + a.setup + "' (expected inertial, noimu, noise, low, high)");
}

std::string setup_name(const LocalizationSetup& s) {
  switch (s.kind) {
    case SetupKind::kInertial: return "inertial";
    case SetupKind::kNoImu: return "noimu";
    case SetupKind::kNoise: return "noise";
  }
  return "?";
}

Pose6D truth_pose_at(const std::vector<TrajectorySample>& truth, double t) {
  std::vector<NominalState> states;
  states.reserve(truth.size());
  for (const TrajectorySample& s : truth) {
    NominalState n;
    n.p = s.position;
    n.q = s.orientation;
    n.stamp = s.stamp;
    states.push_back(n);
  }
  return pose_at(states, t).pose;
}

struct LocalizeSummary {
  std::optional<TrajectoryError> error;
  double mean_ms = 0.0;
  std::size_t failed = 0;
};

LocalizeSummary summarize(const LocalizationOutput& out,
                          const std::vector<TrajectorySample>& truth) {
  LocalizeSummary s;
  for (const ScanReport& r : out.scans) {
    s.mean_ms += r.milliseconds;
    s.failed += r.registration_failed ? 1 : 0;
  }
  if (!out.scans.empty()) s.mean_ms /= static_cast<double>(out.scans.size());
  if (!truth.empty()) s.error = trajectory_rmse(out.trajectory, truth);
  return s;
}

void write_timing_csv(const std::string& path, const LocalizationOutput& out) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "stamp,milliseconds,points,final_cost,valid_fraction,iterations_coarse,iterations_fine,"
       "failed,update_accepted\n";
  f.precision(9);
  for (const ScanReport& r : out.scans) {
    f << r.stamp << ',' << r.milliseconds << ',' << r.points << ',' << r.registration.final_cost
      << ',' << r.registration.valid_fraction << ',' << r.registration.iterations[0] << ','
      << r.registration.iterations[1] << ',' << (r.registration_failed ? 1 : 0) << ','
      << (r.update_accepted ? 1 : 0) << '\n';
  }
}

int cmd_localize(const Common& c, const LocalizeArgs& a) {
  const LocalizationSetup setup = parse_setup(a);
  const AppConfig cfg = load_app_config(c);
  cfg.validate();
  require_file(a.map);
  require_file(a.scans);
  RunManifest m = start_manifest(c, "localize", cfg);
  const SparseGmmMap map = load_map(a.map);
  const std::vector<Scan> scans = load_scans(a.scans);
  m.add_input("map", a.map);
  m.add_input("scans", a.scans);
  if (scans.empty()) throw std::runtime_error("scan file holds no scans");

  std::vector<ImuSample> imu;
  if (!a.imu.empty()) {
    require_file(a.imu);
    imu = load_imu(a.imu);
    m.add_input("imu", a.imu);
  } else if (setup.kind != SetupKind::kNoImu) {
    throw UsageError("setup '" + a.setup + "' requires --imu");
  }
  std::vector<TrajectorySample> truth;
  if (!a.truth.empty()) {
    require_file(a.truth);
    truth = load_trajectory(a.truth);
    m.add_input("truth", a.truth);
  }

  Pose6D initial;
  if (!a.initial.empty()) {
    initial.translation = Eigen::Vector3d(a.initial[0], a.initial[1], a.initial[2]);
    Eigen::Quaterniond q(a.initial[6], a.initial[3], a.initial[4], a.initial[5]);
    if (std::abs(q.norm() - 1.0) > 1e-3) throw UsageError("--initial quaternion is not unit");
    initial.rotation = q.normalized();
  } else if (!truth.empty()) {
    initial = truth_pose_at(truth, scans.front().stamp);
  }

  m.parameters() = {{"setup", setup_name(setup)},
                    {"sigma_t", setup.sigma_t},
                    {"sigma_yaw", setup.sigma_yaw},
                    {"initial",
                     {initial.translation.x(), initial.translation.y(), initial.translation.z(),
                      initial.rotation.x(), initial.rotation.y(), initial.rotation.z(),
                      initial.rotation.w()}}};

  const auto t0 = Clock::now();
  std::optional<std::span<const ImuSample>> imu_span;
  if (!imu.empty()) imu_span = std::span<const ImuSample>(imu);
  const LocalizationOutput out =
      run_localization(map, scans, imu_span, setup, initial, c.seed, cfg.localization);
  m.set_timing("localize_seconds", seconds_since(t0));

  const std::string traj_path = c.out;
  const std::string timing_path = c.out + ".timing.csv";
  save_trajectory(traj_path, out.trajectory);
  write_timing_csv(timing_path, out);
  m.add_output("trajectory", traj_path);
  m.add_output("timing_csv", timing_path);

  const LocalizeSummary s = summarize(out, truth);
  std::printf("%-10s %-12s %-12s %-10s %-8s\n", "setup", "pos_rmse_m", "rot_rmse_deg", "mean_ms",
              "failed");
  if (s.error) {
    std::printf("%-10s %-12.4f %-12.4f %-10.2f %-8zu\n", setup_name(setup).c_str(),
                s.error->position_rmse, s.error->rotation_rmse, s.mean_ms, s.failed);
    m.results()["position_rmse"] = s.error->position_rmse;
    m.results()["rotation_rmse_deg"] = s.error->rotation_rmse;
  } else {
    std::printf("%-10s %-12s %-12s %-10.2f %-8zu\n", setup_name(setup).c_str(), "-", "-",
                s.mean_ms, s.failed);
  }
  m.results()["mean_ms"] = s.mean_ms;
  m.results()["failed_scans"] = s.failed;
  m.results()["scans"] = out.scans.size();
  m.write(manifest_path(c, "localize"));
  if (s.failed == out.scans.size()) throw NumericalError("registration failed on every scan");
  return kOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string scene;
  std::optional<int> scans;
};

int cmd_bench(const Common& c, const BenchArgs& a) {
  AppConfig cfg = load_app_config(c);
  if (a.scans) cfg.simulation.scan_count = *a.scans;
  cfg.validate();
  require_file(a.scene);
  const std::filesystem::path dir = c.out.empty() ? "bench" : c.out;
  std::filesystem::create_directories(dir);
  RunManifest m = start_manifest(c, "bench", cfg);
  m.add_input("scene", a.scene);
  const Scene scene = Scene::load(a.scene);

  const auto t_build = Clock::now();
  const auto points = generate_scene(scene);
  BuildReport report;
  const SparseGmmMap map = build_map(points, cfg.map, &report);
  const double build_seconds = seconds_since(t_build);
  const std::string map_path = (dir / "map.bin").string();
  const std::size_t bytes = save_map(map, map_path);
  m.add_output("map", map_path);
  m.set_timing("build_seconds", build_seconds);

  EvalOptions opts{cfg.eval.probe_step, cfg.eval.outlier_trim, cfg.eval.min_truth_distance};
  const DistanceFn truth = [&scene](const Eigen::Vector3d& x) { return scene.distance(x); };
  const ReconstructionMetrics r = eval_reconstruction(map, truth, opts);
  const std::string t1 = (dir / "table1.csv").string();
  {
    std::ofstream f(t1);
    f.precision(9);
    f << "blocks,total_kernels,bytes,build_seconds,mae,median,std,grad_mean,grad_std,probes\n";
    f << map.blocks().size() << ',' << map.total_kernels() << ',' << bytes << ',' << build_seconds
      << ',' << r.mae << ',' << r.median << ',' << r.std << ',' << r.grad_mean << ','
      << r.grad_std << ',' << r.probes << '\n';
  }
  m.add_output("table1", t1);
  std::printf("reconstruction (%zu blocks, %zu kernels, %zu bytes, %.1f s build)\n",
              map.blocks().size(), map.total_kernels(), bytes, build_seconds);
  print_metrics_table(r);

  SimulationConfig sim = cfg.simulation;
  if (scene.range_noise > 0.0 && sim.range_noise == 0.0) sim.range_noise = scene.range_noise;
  const SyntheticSequence seq = simulate_sequence(scene, sim.trajectory, sequence_options(sim, c.seed));
  const Pose6D initial = sim.trajectory.pose(seq.scans.front().stamp);

  const std::vector<std::pair<std::string, LocalizationSetup>> setups{
      {"inertial", LocalizationSetup::inertial()},
      {"noimu", LocalizationSetup::no_imu()},
      {"low", LocalizationSetup::low_noise()},
      {"high", LocalizationSetup::high_noise()}};
  const std::string t2 = (dir / "table2.csv").string();
  std::ofstream f2(t2);
  f2.precision(9);
  f2 << "setup,pos_rmse_m,rot_rmse_deg,mean_ms,failed_scans\n";
  std::printf("\n%-10s %-12s %-12s %-10s %-8s\n", "setup", "pos_rmse_m", "rot_rmse_deg", "mean_ms",
              "failed");
  for (const auto& [name, setup] : setups) {
    const LocalizationOutput out = run_localization(map, seq.scans, std::span<const ImuSample>(seq.imu),
                                                    setup, initial, c.seed, cfg.localization);
    const LocalizeSummary s = summarize(out, seq.truth);
    std::printf("%-10s %-12.4f %-12.4f %-10.2f %-8zu\n", name.c_str(), s.error->position_rmse,
                s.error->rotation_rmse, s.mean_ms, s.failed);
    f2 << name << ',' << s.error->position_rmse << ',' << s.error->rotation_rmse << ','
       << s.mean_ms << ',' << s.failed << '\n';
    m.results()[name] = {{"position_rmse", s.error->position_rmse},
                         {"rotation_rmse_deg", s.error->rotation_rmse},
                         {"mean_ms", s.mean_ms}};
  }
  f2.close();
  m.add_output("table2", t2);
  m.write((dir / "manifest.json").string());
  return kOk;
}

}  // namespace
}  // namespace gedf::cli

int main(int argc, char** argv) {
  using namespace gedf::cli;
  CLI::App app{"Gaussian-mixture distance field mapping and localization", "gedf"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common common;
  common.argv.assign(argv, argv + argc);
  auto add_common = [&common](CLI::App* sub, bool out_required) {
    sub->add_option("--config", common.config_path, "YAML config file");
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--threads", common.threads, "Worker threads (0 = default)")
        ->check(CLI::NonNegativeNumber);
    auto* out = sub->add_option("--out", common.out, "Output path");
    if (out_required) out->required();
    sub->add_option("--manifest", common.manifest, "Manifest path (default <out>.manifest.json)");
  };

  BuildArgs build;
  auto* s_build = app.add_subcommand("build", "Fit a map from a scene spec or a point cloud");
  add_common(s_build, true);
  auto* g_build = s_build->add_option_group("input");
  g_build->add_option("--scene", build.scene, "Scene spec file");
  g_build->add_option("--cloud", build.cloud, "Point cloud (.ply or xyz)");
  g_build->require_option(1);
  s_build->add_option("--downsample", build.downsample, "Voxel downsampling of the input (m)");
  s_build->add_option("--block-size", build.block_size);
  s_build->add_option("--overlap", build.overlap);
  s_build->add_option("--activation", build.activation);
  s_build->add_option("--voxel", build.voxel);
  s_build->add_option("--tolerance", build.tolerance);
  s_build->add_option("--max-kernels", build.max_kernels);
  s_build->add_flag("--strict", build.strict, "Exit 3 when any block fails to converge");

  QueryArgs query;
  auto* s_query = app.add_subcommand("query", "Query distance and gradient");
  add_common(s_query, false);
  s_query->add_option("--map", query.map)->required();
  auto* g_query = s_query->add_option_group("points");
  g_query->add_option("--points", query.points, "Points file (.ply or xyz)");
  g_query->add_option("--xyz", query.xyz, "Single point")->expected(3)->delimiter(',');
  g_query->require_option(1);

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "Reconstruction metrics against ground truth");
  add_common(s_eval, false);
  s_eval->add_option("--map", eval.map)->required();
  auto* g_eval = s_eval->add_option_group("truth");
  g_eval->add_option("--truth", eval.truth, "Truth point cloud");
  g_eval->add_option("--scene", eval.scene, "Scene spec (analytic distance)");
  g_eval->require_option(1);
  s_eval->add_option("--probe-step", eval.probe_step);
  s_eval->add_option("--trim", eval.trim);
  s_eval->add_option("--min-distance", eval.min_distance);
  s_eval->add_option("--slice-z", eval.slice_z, "Emit a z-plane cross-section");
  s_eval->add_option("--slice-step", eval.slice_step);
  s_eval->add_option("--slice-out", eval.slice_out);

  SimulateArgs simulate;
  auto* s_sim = app.add_subcommand("simulate", "Synthesize scans, IMU and ground truth");
  add_common(s_sim, true);
  s_sim->add_option("--scene", simulate.scene)->required();
  s_sim->add_option("--scans", simulate.scans);

  LocalizeArgs localize;
  auto* s_loc = app.add_subcommand("localize", "Replay localization over a scan sequence");
  add_common(s_loc, true);
  s_loc->add_option("--map", localize.map)->required();
  s_loc->add_option("--scans", localize.scans)->required();
  s_loc->add_option("--imu", localize.imu);
  s_loc->add_option("--truth", localize.truth, "TUM ground truth");
  s_loc->add_option("--setup", localize.setup, "inertial | noimu | noise | low | high");
  s_loc->add_option("--sigma-t", localize.sigma_t);
  s_loc->add_option("--sigma-yaw", localize.sigma_yaw);
  s_loc->add_option("--initial", localize.initial, "x y z qx qy qz qw")->expected(7);

  BenchArgs bench;
  auto* s_bench = app.add_subcommand("bench", "Reconstruction and localization tables");
  add_common(s_bench, false);
  s_bench->add_option("--scene", bench.scene)->required();
  s_bench->add_option("--scans", bench.scans);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (common.threads > 0) omp_set_num_threads(common.threads);
  try {
    if (*s_build) return cmd_build(common, build);
    if (*s_query) return cmd_query(common, query);
    if (*s_eval) return cmd_eval(common, eval);
    if (*s_sim) return cmd_simulate(common, simulate);
    if (*s_loc) return cmd_localize(common, localize);
    if (*s_bench) return cmd_bench(common, bench);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
