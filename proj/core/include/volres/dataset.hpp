#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "volres/mesh.hpp"
#include "volres/tensor.hpp"
#include "volres/voxel.hpp"

namespace volres {

enum class Split { kTrain, kTest };

const char* split_name(Split s);

struct IndexEntry {
  std::string rel_path;  // "<class>/<split>/<name>.off" under the dataset root
  std::int32_t class_id = 0;
  Split split = Split::kTrain;
};

struct DatasetIndex {
  std::vector<std::string> classes;  // sorted, class_id is the position
  std::vector<IndexEntry> entries;

  std::int64_t count(Split s) const;
  std::vector<std::int64_t> per_class_count(Split s) const;
};

// Walks the ModelNet directory layout <root>/<class>/<train|test>/<name>.off.
DatasetIndex scan_modelnet_tree(const std::string& root);

void write_index_json(const DatasetIndex& index, std::array<std::int32_t, 3> dims,
                      const std::string& path);
DatasetIndex read_index_json(const std::string& path,
                             std::array<std::int32_t, 3>* dims_out = nullptr);

// One split held in memory. Meshes are kept (already normalized) only when
// the pipeline must re-voxelize for augmentation.
struct DataSample {
  std::int32_t class_id = 0;
  VoxelGrid grid;
  std::optional<TriangleMesh> mesh;
};

struct Dataset {
  std::array<std::int32_t, 3> dims{30, 30, 30};
  std::vector<std::string> classes;
  std::vector<DataSample> samples;

  std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
  bool has_meshes() const;
};

Dataset dataset_from_cache(const std::string& cache_path,
                           std::vector<std::string> classes);

// Parses, normalizes and voxelizes every OFF file of the split; sample order
// follows the index. Voxelization fans out across samples.
Dataset dataset_from_meshes(const DatasetIndex& index, const std::string& root,
                            Split split, std::array<std::int32_t, 3> dims,
                            bool keep_meshes);

struct Batch {
  Tensor input;  // [n, 1, d, h, w]
  std::vector<std::int32_t> labels;
};

struct BatchOptions {
  std::int64_t batch_size = 64;
  bool augment = false;
  bool shuffle = true;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  Dtype dtype = Dtype::kF32;
};

// Seeded epoch stream. The shuffle is a function of (seed, epoch); each
// augmented sample draws its rotation from hash(seed, epoch, sample index),
// so generation order never changes the data. The final short batch is kept.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, const BatchOptions& options);

  std::optional<Batch> next();
  std::int64_t num_batches() const;

 private:
  const Dataset* dataset_;
  BatchOptions options_;
  std::vector<std::int64_t> order_;
  std::int64_t cursor_ = 0;
};

}  // namespace volres
