#include "gedf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gedf {

namespace {

constexpr double kRayEpsilon = 1e-9;

double rectangle_distance(const RectanglePrimitive& r, const Eigen::Vector3d& x) {
  const auto [u, v] = plane_basis(r.normal);
  const Eigen::Vector3d d = x - r.center;
  const double a = std::max(std::abs(d.dot(u)) - 0.5 * r.size_u, 0.0);
  const double b = std::max(std::abs(d.dot(v)) - 0.5 * r.size_v, 0.0);
  const double h = d.dot(r.normal);
  return std::sqrt(a * a + b * b + h * h);
}

double box_distance(const BoxPrimitive& b, const Eigen::Vector3d& x) {
  const Eigen::Vector3d q = (x - b.center).cwiseAbs() - 0.5 * b.size;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return std::abs(outside + inside);
}

double sphere_distance(const SpherePrimitive& s, const Eigen::Vector3d& x) {
  return std::abs((x - s.center).norm() - s.radius);
}

double cylinder_distance(const CylinderPrimitive& c, const Eigen::Vector3d& x) {
  const Eigen::Vector3d d = x - c.center;
  const Eigen::Vector2d q(std::hypot(d.x(), d.y()) - c.radius, std::abs(d.z()) - 0.5 * c.height);
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return std::abs(outside + inside);
}

void keep_nearest(std::optional<double>& best, double t, double max_range) {
  if (t > kRayEpsilon && t <= max_range && (!best || t < *best)) best = t;
}

void cast_rectangle(const RectanglePrimitive& r, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                    double max_range, std::optional<double>& best) {
  const double denom = d.dot(r.normal);
  if (std::abs(denom) < 1e-15) return;
  const double t = (r.center - o).dot(r.normal) / denom;
  if (!(t > kRayEpsilon)) return;
  const auto [u, v] = plane_basis(r.normal);
  const Eigen::Vector3d hit = o + t * d - r.center;
  if (std::abs(hit.dot(u)) <= 0.5 * r.size_u && std::abs(hit.dot(v)) <= 0.5 * r.size_v) {
    keep_nearest(best, t, max_range);
  }
}

void cast_box(const BoxPrimitive& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
              double max_range, std::optional<double>& best) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  const Eigen::Vector3d lo = b.center - 0.5 * b.size;
  const Eigen::Vector3d hi = b.center + 0.5 * b.size;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return;
      continue;
    }
    double t0 = (lo[a] - o[a]) / d[a];
    double t1 = (hi[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far) return;
  if (t_near > kRayEpsilon) {
    keep_nearest(best, t_near, max_range);
  } else {
    keep_nearest(best, t_far, max_range);
  }
}

void cast_sphere(const SpherePrimitive& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                 double max_range, std::optional<double>& best) {
  const Eigen::Vector3d m = o - s.center;
  const double b = m.dot(d);
  const double c = m.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return;
  const double root = std::sqrt(disc);
  const double t0 = -b - root;
  const double t1 = -b + root;
  if (t0 > kRayEpsilon) {
    keep_nearest(best, t0, max_range);
  } else {
    keep_nearest(best, t1, max_range);
  }
}

void cast_cylinder(const CylinderPrimitive& c, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                   double max_range, std::optional<double>& best) {
  const Eigen::Vector3d m = o - c.center;
  const double half = 0.5 * c.height;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double b = m.x() * d.x() + m.y() * d.y();
    const double k = m.x() * m.x() + m.y() * m.y() - c.radius * c.radius;
    const double disc = b * b - a * k;
    if (disc >= 0.0) {
      const double root = std::sqrt(disc);
      for (double t : {(-b - root) / a, (-b + root) / a}) {
        const double z = m.z() + t * d.z();
        if (std::abs(z) <= half) keep_nearest(best, t, max_range);
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double zc : {-half, half}) {
      const double t = (zc - m.z()) / d.z();
      const double x = m.x() + t * d.x();
      const double y = m.y() + t * d.y();
      if (x * x + y * y <= c.radius * c.radius) keep_nearest(best, t, max_range);
    }
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void sample_rectangle(const Eigen::Vector3d& c, const Eigen::Vector3d& u, const Eigen::Vector3d& v,
                      double su, double sv, double density, std::mt19937_64& rng,
                      std::vector<Eigen::Vector3d>& out) {
  const auto n = static_cast<std::size_t>(std::llround(su * sv * density));
  std::uniform_real_distribution<double> du(-0.5 * su, 0.5 * su);
  std::uniform_real_distribution<double> dv(-0.5 * sv, 0.5 * sv);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = du(rng);
    const double b = dv(rng);
    out.push_back(c + a * u + b * v);
  }
}

}  // namespace

std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_basis(const Eigen::Vector3d& n) {
  int axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  const Eigen::Vector3d u = n.cross(Eigen::Vector3d::Unit(axis)).normalized();
  const Eigen::Vector3d v = n.cross(u);
  return {u, v};
}

double Scene::distance(const Eigen::Vector3d& x) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Primitive& p : primitives) {
    const double d = std::visit(Overloaded{
                                    [&](const RectanglePrimitive& r) { return rectangle_distance(r, x); },
                                    [&](const BoxPrimitive& b) { return box_distance(b, x); },
                                    [&](const SpherePrimitive& s) { return sphere_distance(s, x); },
                                    [&](const CylinderPrimitive& c) { return cylinder_distance(c, x); },
                                },
                                p);
    best = std::min(best, d);
  }
  return best;
}

std::optional<double> Scene::raycast(const Eigen::Vector3d& origin,
                                     const Eigen::Vector3d& direction, double max_range) const {
  std::optional<double> best;
  for (const Primitive& p : primitives) {
    std::visit(Overloaded{
                   [&](const RectanglePrimitive& r) { cast_rectangle(r, origin, direction, max_range, best); },
                   [&](const BoxPrimitive& b) { cast_box(b, origin, direction, max_range, best); },
                   [&](const SpherePrimitive& s) { cast_sphere(s, origin, direction, max_range, best); },
                   [&](const CylinderPrimitive& c) { cast_cylinder(c, origin, direction, max_range, best); },
               },
               p);
  }
  return best;
}

std::vector<Eigen::Vector3d> generate_scene(const Scene& scene) {
  if (scene.primitives.empty()) throw std::invalid_argument("scene has no primitives");
  if (!(scene.density > 0.0)) throw std::invalid_argument("scene density must be > 0");
  std::mt19937_64 rng(scene.seed);
  std::vector<Eigen::Vector3d> out;
  const double rho = scene.density;
  for (const Primitive& p : scene.primitives) {
    std::visit(
        Overloaded{
            [&](const RectanglePrimitive& r) {
              const auto [u, v] = plane_basis(r.normal);
              sample_rectangle(r.center, u, v, r.size_u, r.size_v, rho, rng, out);
            },
            [&](const BoxPrimitive& b) {
              for (int a = 0; a < 3; ++a) {
                const int i = (a + 1) % 3;
                const int j = (a + 2) % 3;
                for (double side : {-0.5, 0.5}) {
                  Eigen::Vector3d c = b.center;
                  c[a] += side * b.size[a];
                  sample_rectangle(c, Eigen::Vector3d::Unit(i), Eigen::Vector3d::Unit(j), b.size[i],
                                   b.size[j], rho, rng, out);
                }
              }
            },
            [&](const SpherePrimitive& s) {
              const auto n = static_cast<std::size_t>(
                  std::llround(4.0 * std::numbers::pi * s.radius * s.radius * rho));
              std::normal_distribution<double> g(0.0, 1.0);
              for (std::size_t i = 0; i < n; ++i) {
                Eigen::Vector3d d(g(rng), g(rng), g(rng));
                while (d.norm() < 1e-12) d = Eigen::Vector3d(g(rng), g(rng), g(rng));
                out.push_back(s.center + s.radius * d.normalized());
              }
            },
            [&](const CylinderPrimitive& c) {
              const double lateral = 2.0 * std::numbers::pi * c.radius * c.height;
              const double cap = std::numbers::pi * c.radius * c.radius;
              std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
              std::uniform_real_distribution<double> unit(0.0, 1.0);
              const auto n_side = static_cast<std::size_t>(std::llround(lateral * rho));
              for (std::size_t i = 0; i < n_side; ++i) {
                const double th = angle(rng);
                const double z = (unit(rng) - 0.5) * c.height;
                out.push_back(c.center + Eigen::Vector3d(c.radius * std::cos(th),
                                                         c.radius * std::sin(th), z));
              }
              const auto n_cap = static_cast<std::size_t>(std::llround(cap * rho));
              for (double zc : {-0.5 * c.height, 0.5 * c.height}) {
                for (std::size_t i = 0; i < n_cap; ++i) {
                  const double th = angle(rng);
                  const double r = c.radius * std::sqrt(unit(rng));
                  out.push_back(c.center + Eigen::Vector3d(r * std::cos(th), r * std::sin(th), zc));
                }
              }
            },
        },
        p);
  }
  return out;
}

Scene Scene::parse(const std::string& text) {
  Scene scene;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    if (!ls.eof()) {
      throw std::runtime_error("scene line " + std::to_string(line_no) + ": non-numeric field");
    }
    auto expect = [&](std::size_t n) {
      if (v.size() != n) {
        throw std::runtime_error("scene line " + std::to_string(line_no) + ": '" + kind +
                                 "' expects " + std::to_string(n) + " values");
      }
    };
    if (kind == "density") {
      expect(1);
      scene.density = v[0];
    } else if (kind == "seed") {
      expect(1);
      scene.seed = static_cast<std::uint64_t>(v[0]);
    } else if (kind == "noise") {
      expect(1);
      scene.range_noise = v[0];
    } else if (kind == "plane") {
      expect(8);
      const Eigen::Vector3d n(v[3], v[4], v[5]);
      if (n.norm() < 1e-12) {
        throw std::runtime_error("scene line " + std::to_string(line_no) + ": zero plane normal");
      }
      scene.primitives.push_back(
          RectanglePrimitive{{v[0], v[1], v[2]}, n.normalized(), v[6], v[7]});
    } else if (kind == "box") {
      expect(6);
      scene.primitives.push_back(BoxPrimitive{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    } else if (kind == "sphere") {
      expect(4);
      scene.primitives.push_back(SpherePrimitive{{v[0], v[1], v[2]}, v[3]});
    } else if (kind == "cylinder") {
      expect(5);
      scene.primitives.push_back(CylinderPrimitive{{v[0], v[1], v[2]}, v[3], v[4]});
    } else {
      throw std::runtime_error("scene line " + std::to_string(line_no) + ": unknown directive '" +
                               kind + "'");
    }
  }
  return scene;
}

Scene Scene::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("input not found: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string Scene::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "density " << density << "\nseed " << seed << "\n";
  if (range_noise > 0.0) out << "noise " << range_noise << "\n";
  for (const Primitive& p : primitives) {
    std::visit(Overloaded{
                   [&](const RectanglePrimitive& r) {
                     out << "plane " << r.center.x() << ' ' << r.center.y() << ' ' << r.center.z()
                         << ' ' << r.normal.x() << ' ' << r.normal.y() << ' ' << r.normal.z()
                         << ' ' << r.size_u << ' ' << r.size_v << "\n";
                   },
                   [&](const BoxPrimitive& b) {
                     out << "box " << b.center.x() << ' ' << b.center.y() << ' ' << b.center.z()
                         << ' ' << b.size.x() << ' ' << b.size.y() << ' ' << b.size.z() << "\n";
                   },
                   [&](const SpherePrimitive& s) {
                     out << "sphere " << s.center.x() << ' ' << s.center.y() << ' '
                         << s.center.z() << ' ' << s.radius << "\n";
                   },
                   [&](const CylinderPrimitive& c) {
                     out << "cylinder " << c.center.x() << ' ' << c.center.y() << ' '
                         << c.center.z() << ' ' << c.radius << ' ' << c.height << "\n";
                   },
               },
               p);
  }
  return out.str();
}

Scene box_room_scene(double density) {
  Scene scene;
  scene.density = density;
  scene.seed = 7;
  scene.primitives = {
      BoxPrimitive{{0.0, 0.0, 1.5}, {8.0, 6.0, 3.0}},
      BoxPrimitive{{3.0, 2.0, 0.5}, {1.0, 1.0, 1.0}},
      BoxPrimitive{{-2.5, -1.8, 0.7}, {1.0, 0.8, 1.4}},
      CylinderPrimitive{{-2.8, 1.8, 1.5}, 0.3, 3.0},
      CylinderPrimitive{{0.8, -0.6, 1.5}, 0.25, 3.0},
  };
  return scene;
}

Scene sphere_scene(double radius, double density) {
  Scene scene;
  scene.density = density;
  scene.seed = 11;
  scene.primitives = {SpherePrimitive{{0.0, 0.0, 0.0}, radius}};
  return scene;
}

}  // namespace gedf
