#include "volres/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "volres/parallel.hpp"
#include "volres/rng.hpp"

namespace volres {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

std::int64_t DatasetIndex::count(Split s) const {
  return std::count_if(entries.begin(), entries.end(),
                       [s](const IndexEntry& e) { return e.split == s; });
}

std::vector<std::int64_t> DatasetIndex::per_class_count(Split s) const {
  std::vector<std::int64_t> counts(classes.size(), 0);
  for (const IndexEntry& e : entries) {
    if (e.split == s) ++counts[static_cast<std::size_t>(e.class_id)];
  }
  return counts;
}

DatasetIndex scan_modelnet_tree(const std::string& root) {
  if (!fs::is_directory(root)) {
    throw Error(ErrorKind::kData, "dataset root is not a directory: " + root);
  }
  DatasetIndex index;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) index.classes.push_back(entry.path().filename().string());
  }
  std::sort(index.classes.begin(), index.classes.end());
  if (index.classes.empty()) {
    throw Error(ErrorKind::kData, "no class directories under " + root);
  }
  for (std::size_t class_id = 0; class_id < index.classes.size(); ++class_id) {
    const std::string& cls = index.classes[class_id];
    for (Split split : {Split::kTrain, Split::kTest}) {
      const fs::path dir = fs::path(root) / cls / split_name(split);
      if (!fs::is_directory(dir)) continue;
      std::vector<std::string> names;
      for (const auto& f : fs::directory_iterator(dir)) {
        if (f.is_regular_file() && f.path().extension() == ".off") {
          names.push_back(f.path().filename().string());
        }
      }
      std::sort(names.begin(), names.end());
      for (const std::string& name : names) {
        index.entries.push_back({cls + "/" + split_name(split) + "/" + name,
                                 static_cast<std::int32_t>(class_id), split});
      }
    }
  }
  if (index.entries.empty()) {
    throw Error(ErrorKind::kData, "no .off files under " + root);
  }
  return index;
}

void write_index_json(const DatasetIndex& index, std::array<std::int32_t, 3> dims,
                      const std::string& path) {
  json doc;
  doc["classes"] = index.classes;
  doc["dims"] = {dims[0], dims[1], dims[2]};
  doc["train_count"] = index.count(Split::kTrain);
  doc["test_count"] = index.count(Split::kTest);
  doc["total_count"] = index.entries.size();
  json entries = json::array();
  for (const IndexEntry& e : index.entries) {
    entries.push_back({{"path", e.rel_path},
                       {"class", e.class_id},
                       {"split", split_name(e.split)}});
  }
  doc["entries"] = std::move(entries);

  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw Error(ErrorKind::kIo, "cannot write index " + tmp.string());
    os << doc.dump(2) << '\n';
  }
  fs::rename(tmp, target);
}

DatasetIndex read_index_json(const std::string& path,
                             std::array<std::int32_t, 3>* dims_out) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open index " + path);
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, path + ": " + e.what());
  }
  DatasetIndex index;
  try {
    index.classes = doc.at("classes").get<std::vector<std::string>>();
    if (dims_out) {
      auto d = doc.at("dims");
      *dims_out = {d.at(0).get<std::int32_t>(), d.at(1).get<std::int32_t>(),
                   d.at(2).get<std::int32_t>()};
    }
    for (const auto& e : doc.at("entries")) {
      IndexEntry entry;
      entry.rel_path = e.at("path").get<std::string>();
      entry.class_id = e.at("class").get<std::int32_t>();
      const std::string split = e.at("split").get<std::string>();
      if (split != "train" && split != "test") {
        throw Error(ErrorKind::kFormat, path + ": unknown split '" + split + "'");
      }
      entry.split = split == "train" ? Split::kTrain : Split::kTest;
      index.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, path + ": " + e.what());
  }
  return index;
}

bool Dataset::has_meshes() const {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(),
                     [](const DataSample& s) { return s.mesh.has_value(); });
}

Dataset dataset_from_cache(const std::string& cache_path,
                           std::vector<std::string> classes) {
  Dataset ds;
  ds.classes = std::move(classes);
  std::vector<CachedSample> cached = read_voxel_cache(cache_path, &ds.dims);
  ds.samples.reserve(cached.size());
  for (CachedSample& c : cached) {
    ds.samples.push_back({static_cast<std::int32_t>(c.class_id), std::move(c.grid),
                          std::nullopt});
  }
  return ds;
}

Dataset dataset_from_meshes(const DatasetIndex& index, const std::string& root,
                            Split split, std::array<std::int32_t, 3> dims,
                            bool keep_meshes) {
  Dataset ds;
  ds.dims = dims;
  ds.classes = index.classes;
  std::vector<const IndexEntry*> wanted;
  for (const IndexEntry& e : index.entries) {
    if (e.split == split) wanted.push_back(&e);
  }
  if (wanted.empty()) {
    throw Error(ErrorKind::kData,
                std::string("split '") + split_name(split) + "' is empty");
  }
  ds.samples.resize(wanted.size());
  const double extent = static_cast<double>(*std::max_element(dims.begin(), dims.end()));
  std::vector<std::string> failures(wanted.size());
  parallel_for(static_cast<std::int64_t>(wanted.size()), 1,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t i = lo; i < hi; ++i) {
                   const IndexEntry& e = *wanted[static_cast<std::size_t>(i)];
                   try {
                     TriangleMesh mesh = normalize_mesh(
                         read_off_file((fs::path(root) / e.rel_path).string()), extent);
                     DataSample& s = ds.samples[static_cast<std::size_t>(i)];
                     s.class_id = e.class_id;
                     s.grid = voxelize(mesh, dims);
                     if (keep_meshes) s.mesh = std::move(mesh);
                   } catch (const Error& err) {
                     failures[static_cast<std::size_t>(i)] = err.what();
                   }
                 }
               });
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i].empty()) {
      throw Error(ErrorKind::kData,
                  wanted[i]->rel_path + " failed to load: " + failures[i]);
    }
  }
  return ds;
}

BatchStream::BatchStream(const Dataset& dataset, const BatchOptions& options)
    : dataset_(&dataset), options_(options) {
  if (dataset.size() == 0) {
    throw Error(ErrorKind::kData, "empty split: cannot iterate batches");
  }
  if (options.batch_size < 1) {
    throw Error(ErrorKind::kConfig, "batch_size must be >= 1");
  }
  if (options.augment && !dataset.has_meshes()) {
    throw Error(ErrorKind::kData,
                "augmentation requires source meshes; load the split with meshes "
                "or disable augment");
  }
  order_.resize(static_cast<std::size_t>(dataset.size()));
  for (std::int64_t i = 0; i < dataset.size(); ++i) order_[static_cast<std::size_t>(i)] = i;
  if (options.shuffle) {
    Rng rng(hash_keys({options.seed, 0x73687566ULL, static_cast<std::uint64_t>(options.epoch)}));
    for (std::int64_t i = dataset.size() - 1; i > 0; --i) {
      const std::int64_t j =
          static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
      std::swap(order_[static_cast<std::size_t>(i)], order_[static_cast<std::size_t>(j)]);
    }
  }
}

std::int64_t BatchStream::num_batches() const {
  return (dataset_->size() + options_.batch_size - 1) / options_.batch_size;
}

std::optional<Batch> BatchStream::next() {
  const std::int64_t total = dataset_->size();
  if (cursor_ >= total) return std::nullopt;
  const std::int64_t n = std::min(options_.batch_size, total - cursor_);
  Batch batch;
  batch.input = Tensor::zeros(
      {n, 1, dataset_->dims[0], dataset_->dims[1], dataset_->dims[2]}, options_.dtype);
  batch.labels.resize(static_cast<std::size_t>(n));

  const std::int64_t base = cursor_;
  parallel_for(n, 4, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t slot = lo; slot < hi; ++slot) {
      const std::int64_t sample_index = order_[static_cast<std::size_t>(base + slot)];
      const DataSample& sample = dataset_->samples[static_cast<std::size_t>(sample_index)];
      batch.labels[static_cast<std::size_t>(slot)] = sample.class_id;
      if (options_.augment) {
        Rng rng(hash_keys({options_.seed, static_cast<std::uint64_t>(options_.epoch),
                           static_cast<std::uint64_t>(sample_index)}));
        const RotationSpec rot = RotationSpec::random(rng);
        const VoxelGrid grid = voxelize(rotate_mesh(*sample.mesh, rot), dataset_->dims);
        grid_into_tensor(grid, batch.input, slot);
      } else {
        grid_into_tensor(sample.grid, batch.input, slot);
      }
    }
  });
  cursor_ += n;
  return batch;
}

}  // namespace volres
