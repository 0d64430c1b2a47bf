#include "volres/voxel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace volres {

VoxelGrid VoxelGrid::empty(std::array<std::int32_t, 3> dims) {
  for (std::int32_t e : dims) {
    if (e < 1) throw Error(ErrorKind::kConfig, "voxel grid extents must be >= 1");
  }
  VoxelGrid g;
  g.dims = dims;
  g.bytes.assign(static_cast<std::size_t>((g.total() + 7) / 8), 0);
  return g;
}

std::int64_t VoxelGrid::popcount() const {
  std::int64_t n = 0;
  for (std::uint8_t b : bytes) n += std::popcount(static_cast<unsigned>(b));
  return n;
}

namespace {

inline void cross(const double* a, const double* b, double* out) {
  out[0] = a[1] * b[2] - a[2] * b[1];
  out[1] = a[2] * b[0] - a[0] * b[2];
  out[2] = a[0] * b[1] - a[1] * b[0];
}

inline double dot(const double* a, const double* b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// Projects the three triangle vertices onto axis and tests overlap against
// the centered box of half extent h projected onto the same axis.
inline bool axis_separates(const double* axis, const double* v0, const double* v1,
                           const double* v2, double h) {
  const double p0 = dot(axis, v0);
  const double p1 = dot(axis, v1);
  const double p2 = dot(axis, v2);
  const double lo = std::min({p0, p1, p2});
  const double hi = std::max({p0, p1, p2});
  const double r = h * (std::abs(axis[0]) + std::abs(axis[1]) + std::abs(axis[2]));
  return lo > r || hi < -r;
}

}  // namespace

bool triangle_box_overlap(const Vec3& box_center, double half_extent, const Vec3& a,
                          const Vec3& b, const Vec3& c) {
  // Translate so the box is centered at the origin (Akenine-Moller).
  const double v0[3] = {a[0] - box_center[0], a[1] - box_center[1], a[2] - box_center[2]};
  const double v1[3] = {b[0] - box_center[0], b[1] - box_center[1], b[2] - box_center[2]};
  const double v2[3] = {c[0] - box_center[0], c[1] - box_center[1], c[2] - box_center[2]};

  // Box face normals: plain AABB overlap per axis.
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = std::min({v0[axis], v1[axis], v2[axis]});
    const double hi = std::max({v0[axis], v1[axis], v2[axis]});
    if (lo > half_extent || hi < -half_extent) return false;
  }

  const double e0[3] = {v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]};
  const double e1[3] = {v2[0] - v1[0], v2[1] - v1[1], v2[2] - v1[2]};
  const double e2[3] = {v0[0] - v2[0], v0[1] - v2[1], v0[2] - v2[2]};

  // Triangle normal.
  double n[3];
  cross(e0, e1, n);
  if (axis_separates(n, v0, v1, v2, half_extent)) return false;

  // Nine edge cross-product axes e_i x unit_j.
  const double* edges[3] = {e0, e1, e2};
  for (const double* e : edges) {
    const double ax[3][3] = {{0.0, -e[2], e[1]}, {e[2], 0.0, -e[0]}, {-e[1], e[0], 0.0}};
    for (int j = 0; j < 3; ++j) {
      if (axis_separates(ax[j], v0, v1, v2, half_extent)) return false;
    }
  }
  return true;
}

VoxelGrid voxelize(const TriangleMesh& mesh, std::array<std::int32_t, 3> dims) {
  if (mesh.faces.empty()) {
    throw Error(ErrorKind::kGeometry, "mesh has no faces");
  }
  VoxelGrid grid = VoxelGrid::empty(dims);
  // Grid layout is (d, h, w) = (z, y, x): world axis a maps to dims[2 - a].
  const double half_world[3] = {dims[2] * 0.5, dims[1] * 0.5, dims[0] * 0.5};

  const Aabb bounds = mesh_bounds(mesh);
  bool intersects_grid = true;
  for (int a = 0; a < 3; ++a) {
    if (bounds.lo[a] > half_world[a] || bounds.hi[a] < -half_world[a]) {
      intersects_grid = false;
    }
  }
  if (!intersects_grid) {
    throw Error(ErrorKind::kGeometry,
                "mesh lies entirely outside the voxel grid; normalize it first");
  }

  for (const auto& face : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(face[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(face[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(face[2])];

    std::int32_t lo_cell[3], hi_cell[3];  // indexed by world axis (x, y, z)
    for (int ax = 0; ax < 3; ++ax) {
      const double max_cell = static_cast<double>(dims[2 - ax] - 1);
      const double lo = std::min({a[ax], b[ax], c[ax]}) + half_world[ax];
      const double hi = std::max({a[ax], b[ax], c[ax]}) + half_world[ax];
      lo_cell[ax] = static_cast<std::int32_t>(std::clamp(std::floor(lo), 0.0, max_cell));
      hi_cell[ax] = static_cast<std::int32_t>(std::clamp(std::floor(hi), 0.0, max_cell));
    }
    for (std::int32_t z = lo_cell[2]; z <= hi_cell[2]; ++z) {
      for (std::int32_t y = lo_cell[1]; y <= hi_cell[1]; ++y) {
        for (std::int32_t x = lo_cell[0]; x <= hi_cell[0]; ++x) {
          const std::int64_t idx = grid.flat(z, y, x);
          if (grid.get(idx)) continue;
          const Vec3 center{x + 0.5 - half_world[0], y + 0.5 - half_world[1],
                            z + 0.5 - half_world[2]};
          if (triangle_box_overlap(center, 0.5, a, b, c)) grid.set(idx);
        }
      }
    }
  }
  return grid;
}

void grid_into_tensor(const VoxelGrid& grid, Tensor& batch, std::int64_t batch_slot) {
  const Shape5 s = batch.shape5();
  if (s.c != 1 || s.d != grid.dims[0] || s.h != grid.dims[1] || s.w != grid.dims[2]) {
    throw Error(ErrorKind::kDimension, "batch tensor does not match grid dims");
  }
  const std::int64_t n = grid.total();
  const std::int64_t base = batch_slot * n;
  if (batch.dtype() == Dtype::kF32) {
    auto out = batch.data<float>();
    for (std::int64_t i = 0; i < n; ++i) out[base + i] = grid.get(i) ? 1.0f : 0.0f;
  } else {
    auto out = batch.data<double>();
    for (std::int64_t i = 0; i < n; ++i) out[base + i] = grid.get(i) ? 1.0 : 0.0;
  }
}

Tensor grid_to_tensor(const VoxelGrid& grid, Dtype dt) {
  Tensor t = Tensor::zeros({1, 1, grid.dims[0], grid.dims[1], grid.dims[2]}, dt);
  grid_into_tensor(grid, t, 0);
  return t;
}

namespace {

constexpr char kMagic[4] = {'V', 'O', 'X', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                     static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  os.write(b, 4);
}

std::uint32_t take_u32(std::ifstream& is, const std::string& path, std::size_t& offset) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) {
    throw Error(ErrorKind::kFormat,
                path + ": truncated at byte offset " + std::to_string(offset));
  }
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_voxel_cache(const std::string& path, const std::vector<CachedSample>& samples,
                       std::array<std::int32_t, 3> dims) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::kIo, "cannot write voxel cache " + tmp.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    for (std::int32_t e : dims) put_u32(os, static_cast<std::uint32_t>(e));
    put_u32(os, static_cast<std::uint32_t>(samples.size()));
    for (const CachedSample& s : samples) {
      if (s.grid.dims != dims) {
        throw Error(ErrorKind::kDimension, "cache sample dims differ from header dims");
      }
      put_u32(os, s.class_id);
      os.write(reinterpret_cast<const char*>(s.grid.bytes.data()),
               static_cast<std::streamsize>(s.grid.bytes.size()));
    }
    if (!os) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::vector<CachedSample> read_voxel_cache(const std::string& path,
                                           std::array<std::int32_t, 3>* dims_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open voxel cache " + path);
  std::size_t offset = 0;
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::kFormat, path + ": bad magic at byte offset 0");
  }
  offset = 4;
  const std::uint32_t version = take_u32(is, path, offset);
  if (version != kVersion) {
    throw Error(ErrorKind::kFormat,
                path + ": unsupported version " + std::to_string(version));
  }
  std::array<std::int32_t, 3> dims;
  for (auto& e : dims) {
    e = static_cast<std::int32_t>(take_u32(is, path, offset));
    if (e < 1 || e > 4096) {
      throw Error(ErrorKind::kFormat, path + ": implausible grid extent " +
                                          std::to_string(e));
    }
  }
  const std::uint32_t count = take_u32(is, path, offset);
  std::vector<CachedSample> samples;
  samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CachedSample s;
    s.class_id = take_u32(is, path, offset);
    s.grid = VoxelGrid::empty(dims);
    is.read(reinterpret_cast<char*>(s.grid.bytes.data()),
            static_cast<std::streamsize>(s.grid.bytes.size()));
    if (is.gcount() != static_cast<std::streamsize>(s.grid.bytes.size())) {
      throw Error(ErrorKind::kFormat,
                  path + ": truncated at byte offset " + std::to_string(offset));
    }
    offset += s.grid.bytes.size();
    samples.push_back(std::move(s));
  }
  if (dims_out) *dims_out = dims;
  return samples;
}

}  // namespace volres
