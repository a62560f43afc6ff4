#include "gedf/imu.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gedf {

std::vector<ImuSample> parse_imu(const std::string& text) {
  std::istringstream in(text);
  std::vector<ImuSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[7];
    for (double& x : v) {
      if (!(ls >> x)) throw std::runtime_error("malformed IMU line " + std::to_string(line_no));
    }
    std::string extra;
    if (ls >> extra) throw std::runtime_error("malformed IMU line " + std::to_string(line_no));
    if (!out.empty() && !(v[0] > out.back().stamp)) {
      throw std::runtime_error("IMU stamps not increasing at line " + std::to_string(line_no));
    }
    out.push_back(ImuSample{v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}});
  }
  return out;
}

std::vector<ImuSample> load_imu(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("input not found: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_imu(buffer.str());
}

void save_imu(const std::string& path, std::span<const ImuSample> samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (const ImuSample& s : samples) {
    out << s.stamp << ' ' << s.accel.x() << ' ' << s.accel.y() << ' ' << s.accel.z() << ' '
        << s.gyro.x() << ' ' << s.gyro.y() << ' ' << s.gyro.z() << '\n';
  }
}

}  // namespace gedf
