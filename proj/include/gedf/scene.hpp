#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gedf {

/// Finite rectangle centered at `center` with unit normal `normal` and side
/// lengths along an in-plane basis derived from the normal.
struct RectanglePrimitive {
  Eigen::Vector3d center;
  Eigen::Vector3d normal;
  double size_u;
  double size_v;
};

/// Surface of an axis-aligned box (full side lengths).
struct BoxPrimitive {
  Eigen::Vector3d center;
  Eigen::Vector3d size;
};

struct SpherePrimitive {
  Eigen::Vector3d center;
  double radius;
};

/// Closed cylinder along +z; `center` is the mid-height point.
struct CylinderPrimitive {
  Eigen::Vector3d center;
  double radius;
  double height;
};

using Primitive = std::variant<RectanglePrimitive, BoxPrimitive, SpherePrimitive, CylinderPrimitive>;

/// Declarative synthetic scene. Text form, one directive per line:
///
///   density <points per m^2>
///   seed <integer>
///   noise <range noise sigma, m>
///   plane <cx> <cy> <cz> <nx> <ny> <nz> <size_u> <size_v>
///   box <cx> <cy> <cz> <sx> <sy> <sz>
///   sphere <cx> <cy> <cz> <r>
///   cylinder <cx> <cy> <cz> <r> <h>
///
/// '#' starts a comment.
struct Scene {
  std::vector<Primitive> primitives;
  double density = 100.0;
  std::uint64_t seed = 1;
  double range_noise = 0.0;

  static Scene parse(const std::string& text);
  static Scene load(const std::string& path);
  std::string to_text() const;

  /// Exact unsigned distance to the nearest primitive surface.
  double distance(const Eigen::Vector3d& x) const;

  /// Smallest positive ray parameter hitting any surface within max_range.
  /// `direction` must be unit length.
  std::optional<double> raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                                double max_range) const;
};

/// Seeded random surface samples, round(area * density) per primitive.
/// Throws std::invalid_argument for a scene without primitives.
std::vector<Eigen::Vector3d> generate_scene(const Scene& scene);

/// In-plane orthonormal basis (u, v) used by rectangles with normal n.
std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_basis(const Eigen::Vector3d& n);

/// An 8 x 6 x 3 m room with two crates and two pillars. Every planar face
/// lies on a multiple of 0.1 m.
Scene box_room_scene(double density = 400.0);

Scene sphere_scene(double radius, double density = 400.0);

}  // namespace gedf
