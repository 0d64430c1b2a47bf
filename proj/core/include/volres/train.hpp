#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "volres/checkpoint.hpp"
#include "volres/dataset.hpp"
#include "volres/network.hpp"
#include "volres/optim.hpp"

namespace volres {

struct TrainConfig {
  int k = 1;
  int batch_size = 64;
  int epochs = 10;
  OptimizerConfig optimizer;
  PlateauSchedule schedule;
  double dropout_rate = 0.3;
  std::uint64_t seed = 0;
  int snapshot_every = 1;  // epochs between snapshots; 0 disables
  bool augment = true;
  Dtype dtype = Dtype::kF32;
  std::string out_dir;  // empty: keep everything in memory

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  std::vector<std::string> snapshot_paths;
};

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> classes);

  void add(std::int32_t truth, std::int32_t predicted);
  std::int64_t at(std::int32_t truth, std::int32_t predicted) const;
  std::int64_t row_total(std::int32_t truth) const;
  std::int64_t total() const { return total_; }
  double accuracy() const;  // trace / total
  std::size_t num_classes() const { return classes_.size(); }
  const std::vector<std::string>& classes() const { return classes_; }

  std::string to_json() const;  // ordered class names + integer matrix
  std::string to_csv() const;

 private:
  std::vector<std::string> classes_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

struct EvalResult {
  double accuracy = 0;
  double loss = 0;
  ConfusionMatrix confusion;
};

// Per epoch: seeded shuffle, forward/backward/step over batches, validation
// pass, plateau update, snapshot. Fully deterministic for a fixed seed.
TrainResult train(Network& net, const Dataset& train_data, const Dataset& val_data,
                  TrainConfig cfg);

EvalResult evaluate(Network& net, const Dataset& data, std::int64_t batch_size = 64);

enum class CombineRule { kMeanSoftmax, kWeightAverage };
enum class Provenance { kSnapshot, kIndependent };

struct EnsembleSpec {
  std::vector<std::string> members;  // checkpoint paths
  CombineRule combine = CombineRule::kMeanSoftmax;
  Provenance provenance = Provenance::kSnapshot;
};

// Loaded ensemble members; all fingerprints must agree.
class Ensemble {
 public:
  static Ensemble load(const EnsembleSpec& spec);

  // Class probabilities for a batch. mean_softmax averages the members'
  // softmax rows (extended-precision accumulate, so identical members
  // reproduce the single model bitwise); weight_average runs the
  // parameter-averaged network.
  Tensor predict(const Tensor& batch);

  std::size_t size() const { return members_.size(); }
  Network& member(std::size_t i) { return members_[i]; }

 private:
  EnsembleSpec spec_;
  std::vector<Network> members_;
  std::optional<Network> averaged_;
};

// Arithmetic mean of the members' parameter arrays loaded into one network.
Network average_weights(std::vector<Network>& members);

EvalResult evaluate_ensemble(Ensemble& ensemble, const Dataset& data,
                             std::int64_t batch_size = 64);

struct SweepAxis {
  std::string key;  // k | lr | dropout | batch_size | epochs
  std::vector<double> values;
};

struct SweepCellResult {
  std::int64_t cell = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> config;
  double val_acc = 0;
  double val_loss = 0;
  bool failed = false;
  std::string error;
};

// Cartesian grid over the axes; each cell trains a fresh network with a
// derived seed. Completed cells are recorded under <out_dir>/cells and
// skipped on re-run; per-cell divergence is recorded, not fatal.
std::vector<SweepCellResult> sweep(const TrainConfig& base,
                                   const std::vector<SweepAxis>& axes,
                                   const Dataset& train_data, const Dataset& val_data,
                                   const std::string& out_dir);

std::uint64_t derive_sweep_seed(std::uint64_t base_seed, std::int64_t cell);
std::uint64_t derive_member_seed(std::uint64_t base_seed, std::int64_t member);

void write_sweep_csv(const std::vector<SweepCellResult>& rows,
                     const std::vector<SweepAxis>& axes, const std::string& path);

}  // namespace volres
