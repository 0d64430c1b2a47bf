#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "volres/mesh.hpp"
#include "volres/tensor.hpp"

namespace volres {

// Binary occupancy volume, bit-packed, flat index (z*h + y)*w + x with bit i
// stored at byte i/8, bit i%8. The grid covers the axis-aligned world cube
// [-dims/2, +dims/2] at unit voxel pitch.
struct VoxelGrid {
  std::array<std::int32_t, 3> dims{30, 30, 30};
  std::vector<std::uint8_t> bytes;

  static VoxelGrid empty(std::array<std::int32_t, 3> dims);

  std::int64_t total() const {
    return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  }
  std::int64_t flat(std::int32_t z, std::int32_t y, std::int32_t x) const {
    return (static_cast<std::int64_t>(z) * dims[1] + y) * dims[2] + x;
  }
  bool get(std::int64_t i) const {
    return (bytes[static_cast<std::size_t>(i >> 3)] >> (i & 7)) & 1;
  }
  void set(std::int64_t i) {
    bytes[static_cast<std::size_t>(i >> 3)] |= static_cast<std::uint8_t>(1u << (i & 7));
  }
  std::int64_t popcount() const;

  bool operator==(const VoxelGrid&) const = default;
};

// Exact triangle / axis-aligned box separating-axis test; touching counts as
// intersecting.
bool triangle_box_overlap(const Vec3& box_center, double half_extent, const Vec3& a,
                          const Vec3& b, const Vec3& c);

// Surface occupancy: a voxel is set iff some triangle intersects its cell.
// Geometry outside the grid is clipped; a mesh whose bounds miss the grid
// entirely is a geometry error.
VoxelGrid voxelize(const TriangleMesh& mesh, std::array<std::int32_t, 3> dims = {30, 30, 30});

// Writes the grid as n=1, c=1 activation values {0, 1}.
void grid_into_tensor(const VoxelGrid& grid, Tensor& batch, std::int64_t batch_slot);
Tensor grid_to_tensor(const VoxelGrid& grid, Dtype dt);

struct CachedSample {
  std::uint32_t class_id = 0;
  VoxelGrid grid;
};

// Cache container: magic "VOXL", u32 version, u32 dims[3], u32 sample count,
// then per sample u32 class id + packed occupancy. Written atomically.
void write_voxel_cache(const std::string& path, const std::vector<CachedSample>& samples,
                       std::array<std::int32_t, 3> dims);
std::vector<CachedSample> read_voxel_cache(const std::string& path,
                                           std::array<std::int32_t, 3>* dims_out = nullptr);

}  // namespace volres
