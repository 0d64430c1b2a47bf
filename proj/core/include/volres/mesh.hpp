#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "volres/error.hpp"
#include "volres/rng.hpp"

namespace volres {

using Vec3 = std::array<double, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::int32_t, 3>> faces;
};

// Parses the OFF text format, tolerating the ModelNet malformation where the
// counts share the header line ("OFF490 518 0"). Comments and blank lines
// are skipped; polygons with more than three vertices are fan-triangulated.
TriangleMesh parse_off(std::string_view text);
TriangleMesh read_off_file(const std::string& path);

// Full printed precision so a parse/write round-trip is lossless.
void write_off(const TriangleMesh& mesh, std::ostream& os);
std::string write_off_string(const TriangleMesh& mesh);

// Centers the bounding box on the origin and uniformly scales the longest
// edge to fill_fraction of the grid extent.
TriangleMesh normalize_mesh(const TriangleMesh& mesh, double grid_extent = 30.0,
                            double fill_fraction = 0.95);

struct RotationSpec {
  Vec3 axis{0.0, 0.0, 1.0};  // unit vector
  double angle = 0.0;        // radians in [0, 2*pi)

  // Uniform axis on the sphere, uniform angle.
  static RotationSpec random(Rng& rng);
};

// Rodrigues rotation matrix for the axis-angle pair; rows are output axes.
std::array<Vec3, 3> rotation_matrix(const RotationSpec& rot);

TriangleMesh rotate_mesh(const TriangleMesh& mesh, const RotationSpec& rot);

struct Aabb {
  Vec3 lo{0, 0, 0};
  Vec3 hi{0, 0, 0};
};

Aabb mesh_bounds(const TriangleMesh& mesh);

}  // namespace volres
