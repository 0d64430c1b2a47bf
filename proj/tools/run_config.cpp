#include "run_config.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace volres::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open config " + path);
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, path + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::kConfig, path + ": config must be a JSON object");

  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "k") {
        k = value.get<int>();
      } else if (key == "batch_size") {
        batch_size = value.get<int>();
      } else if (key == "epochs") {
        epochs = value.get<int>();
      } else if (key == "optimizer") {
        optimizer = value.get<std::string>();
      } else if (key == "lr") {
        lr = value.get<double>();
      } else if (key == "momentum") {
        momentum = value.get<double>();
      } else if (key == "beta1") {
        beta1 = value.get<double>();
      } else if (key == "beta2") {
        beta2 = value.get<double>();
      } else if (key == "eps") {
        eps = value.get<double>();
      } else if (key == "schedule_decay") {
        schedule_decay = value.get<double>();
      } else if (key == "plateau_factor") {
        plateau_factor = value.get<double>();
      } else if (key == "plateau_patience") {
        plateau_patience = value.get<int>();
      } else if (key == "plateau_min_lr") {
        plateau_min_lr = value.get<double>();
      } else if (key == "plateau_threshold") {
        plateau_threshold = value.get<double>();
      } else if (key == "dropout") {
        dropout = value.get<double>();
      } else if (key == "seed") {
        seed = value.get<std::uint64_t>();
      } else if (key == "snapshot_every") {
        snapshot_every = value.get<int>();
      } else if (key == "augment") {
        augment = value.get<bool>();
      } else if (key == "dtype") {
        dtype = value.get<std::string>();
      } else if (key == "dims") {
        dims = value.get<int>();
      } else if (key == "data_dir") {
        data_dir = value.get<std::string>();
      } else if (key == "mesh_root") {
        mesh_root = value.get<std::string>();
      } else if (key == "out_dir") {
        out_dir = value.get<std::string>();
      } else if (key == "grid") {
        grid = value.get<std::map<std::string, std::vector<double>>>();
      } else {
        throw Error(ErrorKind::kConfig, path + ": unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kConfig, path + ": bad value for '" + key + "': " + e.what());
    }
  }
}

std::string RunConfig::to_json_string() const {
  json doc;
  doc["k"] = k;
  doc["batch_size"] = batch_size;
  doc["epochs"] = epochs;
  doc["optimizer"] = optimizer;
  doc["lr"] = lr;
  doc["momentum"] = momentum;
  doc["beta1"] = beta1;
  doc["beta2"] = beta2;
  doc["eps"] = eps;
  doc["schedule_decay"] = schedule_decay;
  doc["plateau_factor"] = plateau_factor;
  doc["plateau_patience"] = plateau_patience;
  doc["plateau_min_lr"] = plateau_min_lr;
  doc["plateau_threshold"] = plateau_threshold;
  doc["dropout"] = dropout;
  doc["seed"] = seed;
  doc["snapshot_every"] = snapshot_every;
  doc["augment"] = augment;
  doc["dtype"] = dtype;
  doc["dims"] = dims;
  doc["data_dir"] = data_dir;
  doc["mesh_root"] = mesh_root;
  doc["out_dir"] = out_dir;
  if (!grid.empty()) doc["grid"] = grid;
  return doc.dump(2);
}

void RunConfig::echo_resolved(const std::string& dir) const {
  fs::create_directories(dir);
  const fs::path target = fs::path(dir) / "resolved_config.json";
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    os << to_json_string() << '\n';
  }
  fs::rename(tmp, target);
}

Dtype RunConfig::parsed_dtype() const {
  if (dtype == "f32") return Dtype::kF32;
  if (dtype == "f64") return Dtype::kF64;
  throw Error(ErrorKind::kConfig, "dtype must be f32 or f64, got '" + dtype + "'");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.k = k;
  cfg.batch_size = batch_size;
  cfg.epochs = epochs;
  if (optimizer == "nadam") {
    cfg.optimizer.kind = OptKind::kNadam;
  } else if (optimizer == "sgd-nesterov") {
    cfg.optimizer.kind = OptKind::kSgdNesterov;
  } else {
    throw Error(ErrorKind::kConfig,
                "optimizer must be nadam or sgd-nesterov, got '" + optimizer + "'");
  }
  cfg.optimizer.lr = lr;
  cfg.optimizer.momentum = momentum;
  cfg.optimizer.beta1 = beta1;
  cfg.optimizer.beta2 = beta2;
  cfg.optimizer.eps = eps;
  cfg.optimizer.schedule_decay = schedule_decay;
  cfg.schedule.factor = plateau_factor;
  cfg.schedule.patience = plateau_patience;
  cfg.schedule.min_lr = plateau_min_lr;
  cfg.schedule.improve_threshold = plateau_threshold;
  cfg.dropout_rate = dropout;
  cfg.seed = seed;
  cfg.snapshot_every = snapshot_every;
  cfg.augment = augment;
  cfg.dtype = parsed_dtype();
  cfg.out_dir = out_dir;
  cfg.validate();
  return cfg;
}

}  // namespace volres::cli
