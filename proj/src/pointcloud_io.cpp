#include "gedf/pointcloud_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "gedf/spatial_key.hpp"

namespace gedf {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("input not found: " + path);
  return in;
}

std::runtime_error line_error(const std::string& what, int line_no) {
  return std::runtime_error(what + " at line " + std::to_string(line_no));
}

bool blank_or_comment(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

std::vector<double> parse_numbers(const std::string& line, int line_no, std::size_t expected) {
  std::istringstream ls(line);
  std::vector<double> values;
  for (double v; ls >> v;) values.push_back(v);
  if (!ls.eof() || values.size() != expected) {
    throw line_error("malformed line: expected " + std::to_string(expected) + " numbers", line_no);
  }
  return values;
}

std::vector<Eigen::Vector3d> parse_ply(std::istream& in) {
  std::string line;
  int line_no = 0;
  std::size_t vertex_count = 0;
  bool saw_vertex = false;
  std::size_t vertex_props = 0;
  bool in_vertex_element = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (line_no == 1) {
      if (word != "ply") throw line_error("missing ply magic", line_no);
      continue;
    }
    if (word == "format") {
      std::string kind;
      ls >> kind;
      if (kind != "ascii") throw line_error("only ASCII PLY is supported", line_no);
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex_element = name == "vertex";
      if (in_vertex_element) {
        if (!(ls >> vertex_count)) throw line_error("malformed vertex element", line_no);
        saw_vertex = true;
      }
    } else if (word == "property" && in_vertex_element) {
      ++vertex_props;
    } else if (word == "end_header") {
      break;
    }
  }
  if (!saw_vertex || vertex_props < 3) {
    throw std::runtime_error("PLY header lacks a vertex element with x y z");
  }
  std::vector<Eigen::Vector3d> points;
  points.reserve(vertex_count);
  while (points.size() < vertex_count && std::getline(in, line)) {
    ++line_no;
    if (blank_or_comment(line)) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    if (v.size() < vertex_props) throw line_error("malformed vertex", line_no);
    points.emplace_back(v[0], v[1], v[2]);
  }
  if (points.size() != vertex_count) throw std::runtime_error("PLY vertex list truncated");
  return points;
}

}  // namespace

std::vector<Eigen::Vector3d> voxel_downsample(std::span<const Eigen::Vector3d> points,
                                              double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be > 0");
  struct Accumulator {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    std::size_t count = 0;
  };
  std::map<std::uint64_t, Accumulator> voxels;
  for (const Eigen::Vector3d& p : points) {
    Accumulator& a = voxels[pack_lattice_key(lattice_index(p, resolution))];
    a.sum += p;
    ++a.count;
  }
  std::vector<Eigen::Vector3d> out;
  out.reserve(voxels.size());
  for (const auto& [key, a] : voxels) out.push_back(a.sum / static_cast<double>(a.count));
  return out;
}

std::vector<Eigen::Vector3d> load_cloud(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string first;
  std::getline(in, first);
  const bool is_ply = (path.size() >= 4 && path.compare(path.size() - 4, 4, ".ply") == 0) ||
                      first.rfind("ply", 0) == 0;
  in.clear();
  in.seekg(0);
  if (is_ply) return parse_ply(in);

  std::vector<Eigen::Vector3d> points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank_or_comment(line)) continue;
    const auto v = parse_numbers(line, line_no, 3);
    points.emplace_back(v[0], v[1], v[2]);
  }
  return points;
}

void save_cloud_xyz(const std::string& path, std::span<const Eigen::Vector3d> points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (const Eigen::Vector3d& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

std::vector<TrajectorySample> parse_trajectory(const std::string& text) {
  std::istringstream in(text);
  std::vector<TrajectorySample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank_or_comment(line)) continue;
    const auto v = parse_numbers(line, line_no, 8);
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-3) throw line_error("non-unit quaternion", line_no);
    out.push_back(TrajectorySample{v[0], {v[1], v[2], v[3]}, q.normalized()});
  }
  return out;
}

std::vector<TrajectorySample> load_trajectory(const std::string& path) {
  std::ifstream in = open_input(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_trajectory(buffer.str());
}

std::string format_trajectory(std::span<const TrajectorySample> trajectory) {
  std::ostringstream out;
  out.precision(9);
  out << std::fixed;
  for (const TrajectorySample& s : trajectory) {
    const Eigen::Quaterniond& q = s.orientation;
    out << s.stamp << ' ' << s.position.x() << ' ' << s.position.y() << ' ' << s.position.z()
        << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  return out.str();
}

void save_trajectory(const std::string& path, std::span<const TrajectorySample> trajectory) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << format_trajectory(trajectory);
}

std::vector<Scan> load_scans(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<Scan> scans;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank_or_comment(line)) continue;
    std::istringstream ls(line);
    std::string tag;
    Scan scan;
    std::size_t count = 0;
    if (!(ls >> tag >> scan.stamp >> scan.sweep_period >> count) || tag != "scan") {
      throw line_error("expected 'scan <stamp> <period> <count>'", line_no);
    }
    scan.points.reserve(count);
    scan.rel_times.reserve(count);
    while (scan.points.size() < count) {
      if (!std::getline(in, line)) throw line_error("scan truncated", line_no);
      ++line_no;
      const auto v = parse_numbers(line, line_no, 4);
      if (!scan.rel_times.empty() && v[3] < scan.rel_times.back()) {
        throw line_error("rel_time decreases", line_no);
      }
      scan.points.emplace_back(v[0], v[1], v[2]);
      scan.rel_times.push_back(v[3]);
    }
    scans.push_back(std::move(scan));
  }
  return scans;
}

void save_scans(const std::string& path, std::span<const Scan> scans) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (const Scan& s : scans) {
    out << "scan " << s.stamp << ' ' << s.sweep_period << ' ' << s.points.size() << '\n';
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const Eigen::Vector3d& p = s.points[i];
      out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << s.rel_times[i] << '\n';
    }
  }
}

}  // namespace gedf
