#include "volres/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace volres {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (k < 1) throw Error(ErrorKind::kConfig, "k must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::kConfig, "batch_size must be >= 1");
  if (epochs < 1) throw Error(ErrorKind::kConfig, "epochs must be >= 1");
  if (snapshot_every < 0) throw Error(ErrorKind::kConfig, "snapshot_every must be >= 0");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw Error(ErrorKind::kConfig, "dropout_rate must lie in [0, 1)");
  }
  optimizer.validate();
  schedule.validate();
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> classes)
    : classes_(std::move(classes)),
      counts_(classes_.size() * classes_.size(), 0) {}

void ConfusionMatrix::add(std::int32_t truth, std::int32_t predicted) {
  const auto k = static_cast<std::int64_t>(classes_.size());
  if (truth < 0 || truth >= k || predicted < 0 || predicted >= k) {
    throw Error(ErrorKind::kIndex, "confusion matrix index out of range");
  }
  ++counts_[static_cast<std::size_t>(truth * k + predicted)];
  ++total_;
}

std::int64_t ConfusionMatrix::at(std::int32_t truth, std::int32_t predicted) const {
  const auto k = static_cast<std::int64_t>(classes_.size());
  return counts_[static_cast<std::size_t>(truth * k + predicted)];
}

std::int64_t ConfusionMatrix::row_total(std::int32_t truth) const {
  const auto k = static_cast<std::int64_t>(classes_.size());
  std::int64_t sum = 0;
  for (std::int64_t j = 0; j < k; ++j) sum += at(truth, static_cast<std::int32_t>(j));
  return sum;
}

double ConfusionMatrix::accuracy() const {
  if (total_ == 0) return 0.0;
  std::int64_t trace = 0;
  const auto k = static_cast<std::int32_t>(classes_.size());
  for (std::int32_t i = 0; i < k; ++i) trace += at(i, i);
  return static_cast<double>(trace) / static_cast<double>(total_);
}

std::string ConfusionMatrix::to_json() const {
  json doc;
  doc["classes"] = classes_;
  json matrix = json::array();
  const auto k = static_cast<std::int32_t>(classes_.size());
  for (std::int32_t i = 0; i < k; ++i) {
    json row = json::array();
    for (std::int32_t j = 0; j < k; ++j) row.push_back(at(i, j));
    matrix.push_back(std::move(row));
  }
  doc["matrix"] = std::move(matrix);
  doc["total"] = total_;
  doc["accuracy"] = accuracy();
  return doc.dump(2);
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "truth\\predicted";
  for (const std::string& c : classes_) os << ',' << c;
  os << '\n';
  const auto k = static_cast<std::int32_t>(classes_.size());
  for (std::int32_t i = 0; i < k; ++i) {
    os << classes_[static_cast<std::size_t>(i)];
    for (std::int32_t j = 0; j < k; ++j) os << ',' << at(i, j);
    os << '\n';
  }
  return os.str();
}

namespace {

std::int32_t argmax_row(const Tensor& probs, std::int64_t row) {
  const std::int64_t classes = probs.dim(1);
  std::int32_t best = 0;
  double best_v = probs.value_at(row * classes);
  for (std::int64_t j = 1; j < classes; ++j) {
    const double v = probs.value_at(row * classes + j);
    if (v > best_v) {
      best_v = v;
      best = static_cast<std::int32_t>(j);
    }
  }
  return best;
}

std::string format_csv_row(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", r.epoch,
                r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.lr, r.seconds);
  return buf;
}

}  // namespace

TrainResult train(Network& net, const Dataset& train_data, const Dataset& val_data,
                  TrainConfig cfg) {
  cfg.validate();
  if (train_data.size() == 0) throw Error(ErrorKind::kData, "training split is empty");

  Optimizer opt(net, cfg.optimizer);
  PlateauSchedule sched = cfg.schedule;
  sched.best_loss = std::numeric_limits<double>::infinity();
  sched.epochs_since_best = 0;

  std::ofstream metrics;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    metrics.open(fs::path(cfg.out_dir) / "metrics.csv", std::ios::trunc);
    if (!metrics) throw Error(ErrorKind::kIo, "cannot write metrics.csv in " + cfg.out_dir);
    metrics << "epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds\n";
  }

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    BatchStream stream(train_data, BatchOptions{cfg.batch_size, cfg.augment,
                                                /*shuffle=*/true, cfg.seed, epoch,
                                                cfg.dtype});
    Rng dropout_rng(hash_keys({cfg.seed, 0x64726f70ULL, static_cast<std::uint64_t>(epoch)}));

    double loss_sum = 0.0;
    std::int64_t seen = 0, correct = 0, batch_index = 0;
    while (auto batch = stream.next()) {
      net.zero_grads();
      Tensor logits = net.forward(batch->input, Mode::kTrain, &dropout_rng);
      SoftmaxXentOp loss_op;
      SoftmaxXentResult res = loss_op.forward(logits, batch->labels);
      if (!std::isfinite(res.loss)) {
        throw Error(ErrorKind::kDivergence,
                    "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch_index));
      }
      const std::int64_t n = batch->input.dim(0);
      loss_sum += res.loss * static_cast<double>(n);
      for (std::int64_t i = 0; i < n; ++i) {
        if (argmax_row(res.probs, i) == batch->labels[static_cast<std::size_t>(i)]) {
          ++correct;
        }
      }
      seen += n;

      net.backward(loss_op.backward());
      opt.step();
      net.set_step(net.step() + 1);
      ++batch_index;
    }

    EvalResult val = evaluate(net, val_data, cfg.batch_size);
    if (!std::isfinite(val.loss)) {
      throw Error(ErrorKind::kDivergence,
                  "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    const double new_lr = plateau_update(sched, val.loss, opt.lr());
    opt.set_lr(new_lr);

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(seen);
    record.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    record.val_loss = val.loss;
    record.val_acc = val.accuracy;
    record.lr = new_lr;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(record);
    if (metrics.is_open()) {
      metrics << format_csv_row(record);
      metrics.flush();
    }

    if (!cfg.out_dir.empty() && cfg.snapshot_every > 0 &&
        epoch % cfg.snapshot_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      const std::string path = (fs::path(cfg.out_dir) / "snapshots" / name).string();
      CheckpointExtras extras;
      extras.tensors = opt.export_state();
      save_checkpoint(net, path, extras);
      result.snapshot_paths.push_back(path);
    }
  }
  return result;
}

EvalResult evaluate(Network& net, const Dataset& data, std::int64_t batch_size) {
  if (data.size() == 0) throw Error(ErrorKind::kData, "evaluation split is empty");
  BatchStream stream(data, BatchOptions{batch_size, /*augment=*/false,
                                        /*shuffle=*/false, 0, 0, net.spec().dtype});
  ConfusionMatrix confusion(data.classes);
  double loss_sum = 0.0;
  std::int64_t seen = 0;
  while (auto batch = stream.next()) {
    Tensor logits = net.forward(batch->input, Mode::kEval);
    SoftmaxXentOp loss_op;
    SoftmaxXentResult res = loss_op.forward(logits, batch->labels);
    const std::int64_t n = batch->input.dim(0);
    loss_sum += res.loss * static_cast<double>(n);
    seen += n;
    for (std::int64_t i = 0; i < n; ++i) {
      confusion.add(batch->labels[static_cast<std::size_t>(i)], argmax_row(res.probs, i));
    }
  }
  EvalResult out;
  out.loss = loss_sum / static_cast<double>(seen);
  out.confusion = std::move(confusion);
  out.accuracy = out.confusion.accuracy();
  return out;
}

Ensemble Ensemble::load(const EnsembleSpec& spec) {
  if (spec.members.empty()) {
    throw Error(ErrorKind::kConfig, "ensemble needs at least one member");
  }
  Ensemble e;
  e.spec_ = spec;
  for (const std::string& path : spec.members) {
    e.members_.push_back(load_checkpoint(path));
    if (e.members_.size() > 1) {
      const std::uint64_t first = e.members_.front().spec().fingerprint();
      if (e.members_.back().spec().fingerprint() != first) {
        throw Error(ErrorKind::kSpec,
                    "ensemble member " + path + " has a different spec fingerprint");
      }
    }
  }
  if (spec.combine == CombineRule::kWeightAverage) {
    e.averaged_ = average_weights(e.members_);
  }
  return e;
}

Network average_weights(std::vector<Network>& members) {
  if (members.empty()) throw Error(ErrorKind::kConfig, "cannot average zero members");
  Network avg = build(members.front().spec());
  std::vector<ParamRef> avg_params = avg.parameters();
  std::vector<std::vector<ParamRef>> member_params;
  member_params.reserve(members.size());
  for (Network& m : members) member_params.push_back(m.parameters());

  const long double inv_n = 1.0L / static_cast<long double>(members.size());
  for (std::size_t pi = 0; pi < avg_params.size(); ++pi) {
    Tensor& dst = *avg_params[pi].value;
    for (std::int64_t i = 0; i < dst.size(); ++i) {
      long double acc = 0.0L;
      for (auto& mp : member_params) {
        acc += static_cast<long double>(mp[pi].value->value_at(i));
      }
      dst.set_value(i, static_cast<double>(acc * inv_n));
    }
  }
  avg.set_step(members.front().step());
  return avg;
}

Tensor Ensemble::predict(const Tensor& batch) {
  if (averaged_) {
    return softmax_rows(averaged_->forward(batch, Mode::kEval));
  }
  // mean of simplex points stays on the simplex; no renormalization needed.
  Tensor first_probs = softmax_rows(members_.front().forward(batch, Mode::kEval));
  if (members_.size() == 1) return first_probs;

  const std::int64_t count = first_probs.size();
  std::vector<long double> acc(static_cast<std::size_t>(count), 0.0L);
  auto accumulate = [&acc, count](const Tensor& probs) {
    if (probs.dtype() == Dtype::kF32) {
      auto p = probs.data<float>();
      for (std::int64_t i = 0; i < count; ++i) acc[static_cast<std::size_t>(i)] += p[i];
    } else {
      auto p = probs.data<double>();
      for (std::int64_t i = 0; i < count; ++i) acc[static_cast<std::size_t>(i)] += p[i];
    }
  };
  accumulate(first_probs);
  for (std::size_t m = 1; m < members_.size(); ++m) {
    accumulate(softmax_rows(members_[m].forward(batch, Mode::kEval)));
  }
  Tensor out = Tensor::zeros(first_probs.shape(), first_probs.dtype());
  const long double inv_n = 1.0L / static_cast<long double>(members_.size());
  if (out.dtype() == Dtype::kF32) {
    auto o = out.data<float>();
    for (std::int64_t i = 0; i < count; ++i) {
      o[i] = static_cast<float>(acc[static_cast<std::size_t>(i)] * inv_n);
    }
  } else {
    auto o = out.data<double>();
    for (std::int64_t i = 0; i < count; ++i) {
      o[i] = static_cast<double>(acc[static_cast<std::size_t>(i)] * inv_n);
    }
  }
  return out;
}

EvalResult evaluate_ensemble(Ensemble& ensemble, const Dataset& data,
                             std::int64_t batch_size) {
  if (data.size() == 0) throw Error(ErrorKind::kData, "evaluation split is empty");
  const Dtype dt = ensemble.member(0).spec().dtype;
  BatchStream stream(data, BatchOptions{batch_size, /*augment=*/false,
                                        /*shuffle=*/false, 0, 0, dt});
  ConfusionMatrix confusion(data.classes);
  double loss_sum = 0.0;
  std::int64_t seen = 0;
  while (auto batch = stream.next()) {
    Tensor probs = ensemble.predict(batch->input);
    const std::int64_t n = batch->input.dim(0);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int32_t label = batch->labels[static_cast<std::size_t>(i)];
      confusion.add(label, argmax_row(probs, i));
      const double p = probs.value_at(i * probs.dim(1) + label);
      loss_sum += -std::log(std::max(p, 1e-300));
    }
    seen += n;
  }
  EvalResult out;
  out.loss = loss_sum / static_cast<double>(seen);
  out.confusion = std::move(confusion);
  out.accuracy = out.confusion.accuracy();
  return out;
}

std::uint64_t derive_sweep_seed(std::uint64_t base_seed, std::int64_t cell) {
  return hash_keys({base_seed, 0x73776565ULL, static_cast<std::uint64_t>(cell)});
}

std::uint64_t derive_member_seed(std::uint64_t base_seed, std::int64_t member) {
  return hash_keys({base_seed, 0x6d656d62ULL, static_cast<std::uint64_t>(member)});
}

namespace {

TrainConfig apply_axis(TrainConfig cfg, const std::string& key, double value) {
  if (key == "k") {
    cfg.k = static_cast<int>(value);
  } else if (key == "lr") {
    cfg.optimizer.lr = value;
  } else if (key == "dropout") {
    cfg.dropout_rate = value;
  } else if (key == "batch_size") {
    cfg.batch_size = static_cast<int>(value);
  } else if (key == "epochs") {
    cfg.epochs = static_cast<int>(value);
  } else {
    throw Error(ErrorKind::kConfig, "unknown sweep axis '" + key + "'");
  }
  return cfg;
}

std::optional<SweepCellResult> read_cell_record(const std::string& path) {
  std::ifstream is(path);
  if (!is) return std::nullopt;
  json doc;
  try {
    is >> doc;
    SweepCellResult r;
    r.cell = doc.at("cell").get<std::int64_t>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.config = doc.at("config").get<std::map<std::string, double>>();
    r.val_acc = doc.at("val_acc").get<double>();
    r.val_loss = doc.at("val_loss").get<double>();
    r.failed = doc.at("status").get<std::string>() == "failed";
    if (doc.contains("error")) r.error = doc.at("error").get<std::string>();
    return r;
  } catch (const json::exception&) {
    return std::nullopt;  // damaged record: recompute the cell
  }
}

void write_cell_record(const SweepCellResult& r, const std::string& path) {
  json doc;
  doc["cell"] = r.cell;
  doc["seed"] = r.seed;
  doc["config"] = r.config;
  doc["val_acc"] = r.val_acc;
  doc["val_loss"] = r.val_loss;
  doc["status"] = r.failed ? "failed" : "ok";
  if (r.failed) doc["error"] = r.error;
  const fs::path target(path);
  fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    os << doc.dump(2) << '\n';
  }
  fs::rename(tmp, target);
}

}  // namespace

std::vector<SweepCellResult> sweep(const TrainConfig& base,
                                   const std::vector<SweepAxis>& axes,
                                   const Dataset& train_data, const Dataset& val_data,
                                   const std::string& out_dir) {
  if (axes.empty()) throw Error(ErrorKind::kConfig, "sweep grid has no axes");
  std::int64_t cells = 1;
  for (const SweepAxis& axis : axes) {
    if (axis.values.empty()) {
      throw Error(ErrorKind::kConfig, "sweep axis '" + axis.key + "' has no values");
    }
    cells *= static_cast<std::int64_t>(axis.values.size());
  }

  std::vector<SweepCellResult> results;
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    char name[64];
    std::snprintf(name, sizeof(name), "cell_%04lld.json", static_cast<long long>(cell));
    const std::string record_path = (fs::path(out_dir) / "cells" / name).string();
    if (auto existing = read_cell_record(record_path)) {
      results.push_back(std::move(*existing));
      continue;
    }

    SweepCellResult r;
    r.cell = cell;
    r.seed = derive_sweep_seed(base.seed, cell);
    TrainConfig cfg = base;
    cfg.out_dir.clear();  // cells keep no snapshots, only the record
    std::int64_t rem = cell;
    for (const SweepAxis& axis : axes) {
      const auto idx = static_cast<std::size_t>(
          rem % static_cast<std::int64_t>(axis.values.size()));
      rem /= static_cast<std::int64_t>(axis.values.size());
      r.config[axis.key] = axis.values[idx];
      cfg = apply_axis(std::move(cfg), axis.key, axis.values[idx]);
    }
    cfg.seed = r.seed;

    try {
      NetworkSpec spec;
      spec.k = cfg.k;
      spec.num_classes = static_cast<int>(train_data.classes.size());
      spec.dropout_rate = cfg.dropout_rate;
      spec.dtype = cfg.dtype;
      spec.input_dim = train_data.dims[0];
      Network net = build(spec);
      Rng init_rng(cfg.seed);
      init_weights(net, init_rng);
      TrainResult tr = train(net, train_data, val_data, cfg);
      r.val_acc = tr.records.back().val_acc;
      r.val_loss = tr.records.back().val_loss;
    } catch (const Error& e) {
      r.failed = true;
      r.error = e.what();
      r.val_acc = 0.0;
      r.val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    write_cell_record(r, record_path);
    results.push_back(std::move(r));
  }

  std::stable_sort(results.begin(), results.end(),
                   [](const SweepCellResult& a, const SweepCellResult& b) {
                     if (a.failed != b.failed) return !a.failed;
                     return a.val_acc > b.val_acc;
                   });
  write_sweep_csv(results, axes, (fs::path(out_dir) / "sweep.csv").string());
  return results;
}

void write_sweep_csv(const std::vector<SweepCellResult>& rows,
                     const std::vector<SweepAxis>& axes, const std::string& path) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    os << "cell,seed";
    for (const SweepAxis& axis : axes) os << ',' << axis.key;
    os << ",val_acc,val_loss,status\n";
    for (const SweepCellResult& r : rows) {
      os << r.cell << ',' << r.seed;
      for (const SweepAxis& axis : axes) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", r.config.at(axis.key));
        os << ',' << buf;
      }
      char buf[96];
      std::snprintf(buf, sizeof(buf), ",%.9g,%.9g,%s\n", r.val_acc, r.val_loss,
                    r.failed ? "failed" : "ok");
      os << buf;
    }
  }
  fs::rename(tmp, target);
}

}  // namespace volres
