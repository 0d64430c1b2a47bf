#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "volres/train.hpp"

namespace volres::cli {

// Flat JSON config mirroring TrainConfig plus data paths. Unknown keys are
// rejected so a typo can never silently fall back to a default. Command-line
// flags override file values; the fully-resolved document is echoed into the
// output directory as resolved_config.json.
struct RunConfig {
  int k = 1;
  int batch_size = 64;
  int epochs = 10;
  std::string optimizer = "nadam";  // nadam | sgd-nesterov
  double lr = 0.0002;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double schedule_decay = 0.04;
  double plateau_factor = 0.02;
  int plateau_patience = 3;
  double plateau_min_lr = 1e-7;
  double plateau_threshold = 1e-4;
  double dropout = 0.3;
  std::uint64_t seed = 0;
  int snapshot_every = 1;
  bool augment = true;
  std::string dtype = "f32";  // f32 | f64
  int dims = 30;
  std::string data_dir;
  std::string mesh_root;
  std::string out_dir;
  std::map<std::string, std::vector<double>> grid;  // sweep axes

  void load_file(const std::string& path);
  std::string to_json_string() const;
  void echo_resolved(const std::string& dir) const;

  TrainConfig train_config() const;
  Dtype parsed_dtype() const;
};

}  // namespace volres::cli
