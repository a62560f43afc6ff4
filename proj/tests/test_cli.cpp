#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "app_config.hpp"
#include "gedf/map_serde.hpp"
#include "gedf/pointcloud_io.hpp"
#include "manifest.hpp"

namespace gedf {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string output;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::path(::testing::TempDir()) / "gedf_cli_test";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  const fs::path log = work_dir() / "last_run.log";
  const std::string cmd =
      "cd '" + work_dir().string() + "' && '" + std::string(GEDF_CLI_PATH) + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_file(log);
  return r;
}

std::string scene_path(const std::string& name) { return std::string(GEDF_SOURCE_DIR) + "/scenes/" + name; }

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const fs::path& plane_map() {
  static const fs::path path = [] {
    const fs::path out = work_dir() / "plane.bin";
    const RunResult r = run("build --scene '" + scene_path("plane.scene") + "' --out plane.bin");
    EXPECT_EQ(r.code, 0) << r.output;
    return out;
  }();
  return path;
}

nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

TEST(Cli, BuildWritesMapAndManifest) {
  const fs::path map = plane_map();
  ASSERT_TRUE(fs::exists(map));
  const nlohmann::json m = load_json(work_dir() / "plane.bin.manifest.json");
  EXPECT_EQ(m["command"], "build");
  EXPECT_EQ(m["seed"], 1);
  EXPECT_EQ(m["inputs"][0]["role"], "scene");
  EXPECT_EQ(m["inputs"][0]["sha256"], cli::sha256_file(scene_path("plane.scene")));
  EXPECT_EQ(m["outputs"][0]["sha256"], cli::sha256_file(map.string()));
  EXPECT_TRUE(m["config"].contains("fit"));
  EXPECT_TRUE(m["timing"].contains("build_seconds"));

  const SparseGmmMap loaded = load_map(map.string());
  EXPECT_EQ(m["results"]["blocks"], loaded.blocks().size());
  EXPECT_EQ(m["results"]["bytes"], fs::file_size(map));
  EXPECT_EQ(fs::file_size(map), serialized_size(loaded.blocks().size(), loaded.total_kernels()));
  EXPECT_LE(loaded.global_mae(), 0.05);
}

TEST(Cli, BuildIsDeterministic) {
  plane_map();
  const RunResult r = run("build --scene '" + scene_path("plane.scene") + "' --threads 2 --out plane2.bin");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(read_file(work_dir() / "plane2.bin"), read_file(plane_map()));
}

TEST(Cli, QueryRowsMatchLibrary) {
  const SparseGmmMap map = load_map(plane_map().string());
  const std::vector<Eigen::Vector3d> pts{{0.0, 0.0, 0.5}, {0.3, -0.2, 0.7}, {-1.1, 1.2, 0.05}, {9.0, 9.0, 9.0}};
  save_cloud_xyz((work_dir() / "probes.xyz").string(), pts);
  const RunResult r = run("query --map plane.bin --points probes.xyz --out probes.csv");
  ASSERT_EQ(r.code, 0) << r.output;
  std::istringstream csv(read_file(work_dir() / "probes.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "x,y,z,d,gx,gy,gz,valid");
  const auto expected = map.query_batch(pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ASSERT_TRUE(std::getline(csv, line));
    std::vector<double> cols;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cols.push_back(std::stod(cell));
    ASSERT_EQ(cols.size(), 8u);
    EXPECT_EQ(cols[3], expected[i].value);
    EXPECT_EQ(cols[4], expected[i].gradient.x());
    EXPECT_EQ(cols[5], expected[i].gradient.y());
    EXPECT_EQ(cols[6], expected[i].gradient.z());
    EXPECT_EQ(cols[7] != 0.0, expected[i].valid);
  }
}

TEST(Cli, EvalReportsFidelityAndEikonalMetrics) {
  plane_map();
  const RunResult r = run("eval --map plane.bin --scene '" + scene_path("plane.scene") + "' --out eval.json");
  ASSERT_EQ(r.code, 0) << r.output;
  const nlohmann::json m = load_json(work_dir() / "eval.json.manifest.json");
  const auto& res = m["results"];
  EXPECT_LE(res["mae"].get<double>(), 0.05);
  EXPECT_LE(res["median"].get<double>(), 0.03);
  const RunResult far = run("eval --map plane.bin --scene '" + scene_path("plane.scene") +
                            "' --min-distance 0.3 --out eval_far.json");
  ASSERT_EQ(far.code, 0) << far.output;
  const double grad_mean = load_json(work_dir() / "eval_far.json.manifest.json")["results"]["grad_mean"];
  EXPECT_GE(grad_mean, 0.95);
  EXPECT_LE(grad_mean, 1.02);
}

TEST(Cli, SimulateAndLocalizeRoundTrip) {
  write_file(work_dir() / "small.scene",
             "density 300\nseed 5\nbox 0 0 1.25 4 3 2.5\nbox 1.2 0.8 0.4 0.8 0.6 0.8\n"
             "cylinder -1.2 -0.7 1.25 0.25 2.5\n");
  write_file(work_dir() / "small.yaml", "simulation:\n  loop_radius: 0.8\n  loop_center: [0.0, 0.0, 1.2]\n");
  RunResult r = run("build --scene small.scene --out small.bin");
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("simulate --scene small.scene --config small.yaml --scans 15 --out seq");
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* ext : {".scans", ".imu", ".truth.tum"}) EXPECT_TRUE(fs::exists(work_dir() / ("seq" + std::string(ext))));
  EXPECT_EQ(load_scans((work_dir() / "seq.scans").string()).size(), 15u);

  for (const std::string setup : {"noimu", "inertial"}) {
    const std::string out = "loc_" + setup + ".tum";
    r = run("localize --map small.bin --scans seq.scans --imu seq.imu --truth seq.truth.tum --config small.yaml --setup " +
            setup + " --out " + out);
    ASSERT_EQ(r.code, 0) << r.output;
    const nlohmann::json m = load_json(work_dir() / (out + ".manifest.json"));
    EXPECT_EQ(m["results"]["scans"], 15);
    EXPECT_EQ(m["results"]["failed_scans"], 0);
    EXPECT_LT(m["results"]["position_rmse"].get<double>(), 0.1) << setup;
    EXPECT_EQ(load_trajectory((work_dir() / out).string()).size(), 15u);
  }
}

TEST(Cli, ExitCodes) {
  plane_map();
  EXPECT_EQ(run("build --scene missing.scene --out x.bin").code, 2);
  EXPECT_EQ(run("query --map missing.bin --xyz 0,0,0").code, 2);
  EXPECT_EQ(run("build --out x.bin").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);

  write_file(work_dir() / "unknown_key.yaml", "map:\n  bogus: 1\n");
  RunResult r = run("build --scene '" + scene_path("plane.scene") + "' --config unknown_key.yaml --out x.bin");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("map.bogus"), std::string::npos) << r.output;

  write_file(work_dir() / "bad_margin.yaml", "map:\n  overlap_margin: 0.6\n");
  EXPECT_EQ(run("build --scene '" + scene_path("plane.scene") + "' --config bad_margin.yaml --out x.bin").code, 1);

  const std::string bytes = read_file(plane_map());
  write_file(work_dir() / "truncated.bin", bytes.substr(0, bytes.size() - 5));
  r = run("query --map truncated.bin --xyz 0,0,0 --out t.csv");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("truncated"), std::string::npos) << r.output;

  EXPECT_EQ(run("localize --map plane.bin --scans missing.scans --setup bogus --out l.tum").code, 1);
  write_file(work_dir() / "empty.scans", "");
  EXPECT_EQ(run("localize --map plane.bin --scans empty.scans --setup noimu --out l.tum").code, 2);
}

TEST(AppConfig, DefaultsRoundTripAndValidation) {
  const cli::AppConfig defaults = cli::parse_config("");
  EXPECT_EQ(defaults.map.block_size, 1.0);
  EXPECT_EQ(defaults.map.fit.mae_tolerance, 0.05);
  const cli::AppConfig file = cli::load_config(std::string(GEDF_SOURCE_DIR) + "/configs/default.yaml");
  EXPECT_EQ(cli::to_json(file), cli::to_json(defaults));
  EXPECT_THROW(cli::parse_config("fit:\n  mae_tolerance: -1\n").validate(), std::invalid_argument);
  EXPECT_THROW(cli::parse_config("fit:\n  mae_tolerance: abc\n"), std::invalid_argument);
  EXPECT_THROW(cli::parse_config("nonsense:\n  x: 1\n"), std::invalid_argument);
  const cli::AppConfig custom = cli::parse_config("registration:\n  max_iterations: 12\n");
  EXPECT_EQ(custom.localization.registration.max_iterations, 12);
}

TEST(Manifest, Sha256KnownVectors) {
  EXPECT_EQ(cli::sha256_bytes(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_bytes("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_THROW(cli::sha256_file("/nonexistent/file"), std::runtime_error);
}

}  // namespace
}  // namespace gedf
