// Shared fixtures: tiny OFF documents, synthetic meshes and datasets.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "volres/dataset.hpp"
#include "volres/mesh.hpp"
#include "volres/rng.hpp"
#include "volres/voxel.hpp"

namespace fixtures {

inline constexpr const char* kTetraOff =
    "OFF\n"
    "4 4 6\n"
    "1.0 1.0 1.0\n"
    "-1.0 -1.0 1.0\n"
    "-1.0 1.0 -1.0\n"
    "1.0 -1.0 -1.0\n"
    "3 0 1 2\n"
    "3 0 3 1\n"
    "3 0 2 3\n"
    "3 1 3 2\n";

// Same tetrahedron with the counts fused onto the header line, the known
// ModelNet malformation.
inline constexpr const char* kTetraOffFusedHeader =
    "OFF4 4 6\n"
    "1.0 1.0 1.0\n"
    "-1.0 -1.0 1.0\n"
    "-1.0 1.0 -1.0\n"
    "1.0 -1.0 -1.0\n"
    "3 0 1 2\n"
    "3 0 3 1\n"
    "3 0 2 3\n"
    "3 1 3 2\n";

// Axis-aligned box shell from lo to hi, two triangles per face.
inline volres::TriangleMesh box_mesh(volres::Vec3 lo, volres::Vec3 hi) {
  volres::TriangleMesh m;
  m.vertices = {
      {lo[0], lo[1], lo[2]}, {hi[0], lo[1], lo[2]}, {hi[0], hi[1], lo[2]},
      {lo[0], hi[1], lo[2]}, {lo[0], lo[1], hi[2]}, {hi[0], lo[1], hi[2]},
      {hi[0], hi[1], hi[2]}, {lo[0], hi[1], hi[2]},
  };
  const std::int32_t quads[6][4] = {{0, 1, 2, 3}, {4, 7, 6, 5}, {0, 4, 5, 1},
                                    {1, 5, 6, 2}, {2, 6, 7, 3}, {3, 7, 4, 0}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

inline volres::TriangleMesh tetra_mesh(double scale = 1.0) {
  volres::TriangleMesh m;
  m.vertices = {{scale, scale, scale},
                {-scale, -scale, scale},
                {-scale, scale, -scale},
                {scale, -scale, -scale}};
  m.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return m;
}

// Random triangle soup inside a ball. Triangle edges stay small relative to
// the bounds, like tessellated CAD surfaces.
inline volres::TriangleMesh random_mesh(volres::Rng& rng, int triangles, double radius) {
  volres::TriangleMesh m;
  for (int t = 0; t < triangles; ++t) {
    const auto base = static_cast<std::int32_t>(m.vertices.size());
    volres::Vec3 center{(rng.uniform() * 2 - 1) * radius * 0.6,
                        (rng.uniform() * 2 - 1) * radius * 0.6,
                        (rng.uniform() * 2 - 1) * radius * 0.6};
    for (int v = 0; v < 3; ++v) {
      m.vertices.push_back({center[0] + (rng.uniform() * 2 - 1) * radius * 0.08,
                            center[1] + (rng.uniform() * 2 - 1) * radius * 0.08,
                            center[2] + (rng.uniform() * 2 - 1) * radius * 0.08});
    }
    m.faces.push_back({base, base + 1, base + 2});
  }
  return m;
}

// Writes a ModelNet-style directory tree of tiny meshes:
// <root>/<class>/<train|test>/<class>_NNNN.off
inline void write_fixture_tree(const std::filesystem::path& root,
                               const std::vector<std::string>& classes,
                               int train_per_class, int test_per_class) {
  namespace fs = std::filesystem;
  volres::Rng rng(20260811);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (const char* split : {"train", "test"}) {
      const int count = std::string(split) == "train" ? train_per_class : test_per_class;
      const fs::path dir = root / classes[c] / split;
      fs::create_directories(dir);
      for (int i = 0; i < count; ++i) {
        // Alternate shapes per class so classes are distinguishable.
        volres::TriangleMesh mesh;
        const double s = 0.8 + 0.4 * rng.uniform();
        if (c % 2 == 0) {
          mesh = box_mesh({-s, -s, -s}, {s, s * 0.7, s * 0.5});
        } else {
          mesh = tetra_mesh(s);
        }
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%04d.off", classes[c].c_str(), i);
        std::ofstream os(dir / name, std::ios::trunc);
        volres::write_off(mesh, os);
      }
    }
  }
}

// Small in-memory dataset of voxelized boxes (class 0) vs tetrahedra
// (class 1); geometrically separable, used by training tests.
inline volres::Dataset toy_dataset(int per_class, std::array<std::int32_t, 3> dims,
                                   std::uint64_t seed, bool keep_meshes) {
  volres::Dataset ds;
  ds.dims = dims;
  ds.classes = {"box", "tetra"};
  volres::Rng rng(seed);
  const double extent = static_cast<double>(dims[0]);
  for (int cls = 0; cls < 2; ++cls) {
    for (int i = 0; i < per_class; ++i) {
      const double s = 0.7 + 0.5 * rng.uniform();
      volres::TriangleMesh mesh =
          cls == 0 ? box_mesh({-s, -s, -s}, {s, s * (0.5 + 0.3 * rng.uniform()), s * 0.8})
                   : tetra_mesh(s);
      mesh = volres::normalize_mesh(mesh, extent);
      volres::DataSample sample;
      sample.class_id = cls;
      sample.grid = volres::voxelize(mesh, dims);
      if (keep_meshes) sample.mesh = mesh;
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

// Random binary occupancy dataset; used where geometry is irrelevant.
inline volres::Dataset random_dataset(int samples, int classes,
                                      std::array<std::int32_t, 3> dims,
                                      std::uint64_t seed) {
  volres::Dataset ds;
  ds.dims = dims;
  for (int c = 0; c < classes; ++c) ds.classes.push_back("class" + std::to_string(c));
  volres::Rng rng(seed);
  for (int i = 0; i < samples; ++i) {
    volres::DataSample sample;
    sample.class_id = static_cast<std::int32_t>(i % classes);
    sample.grid = volres::VoxelGrid::empty(dims);
    for (std::int64_t v = 0; v < sample.grid.total(); ++v) {
      if (rng.uniform() < 0.5) sample.grid.set(v);
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace fixtures
