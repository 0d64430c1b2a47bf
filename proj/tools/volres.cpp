#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "run_config.hpp"
#include "volres/dataset.hpp"
#include "volres/gradcheck.hpp"
#include "volres/parallel.hpp"
#include "volres/train.hpp"

namespace fs = std::filesystem;
using namespace volres;
using volres::cli::RunConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitVerification = 3;

// ---------------------------------------------------------------- voxelize

struct VoxelizeReport {
  std::int64_t written = 0;
  std::vector<std::pair<std::string, std::string>> skipped;  // path, reason
};

VoxelizeReport voxelize_split(const DatasetIndex& index, const std::string& input_dir,
                              Split split, std::array<std::int32_t, 3> dims,
                              const std::string& cache_path) {
  std::vector<const IndexEntry*> wanted;
  for (const IndexEntry& e : index.entries) {
    if (e.split == split) wanted.push_back(&e);
  }
  VoxelizeReport report;
  if (wanted.empty()) return report;

  const double extent = static_cast<double>(*std::max_element(dims.begin(), dims.end()));
  std::vector<VoxelGrid> grids(wanted.size());
  std::vector<std::string> errors(wanted.size());
  parallel_for(static_cast<std::int64_t>(wanted.size()), 1,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t i = lo; i < hi; ++i) {
                   const IndexEntry& e = *wanted[static_cast<std::size_t>(i)];
                   try {
                     TriangleMesh mesh = normalize_mesh(
                         read_off_file((fs::path(input_dir) / e.rel_path).string()),
                         extent);
                     grids[static_cast<std::size_t>(i)] = voxelize(mesh, dims);
                   } catch (const Error& err) {
                     errors[static_cast<std::size_t>(i)] = err.what();
                   }
                 }
               });

  std::vector<CachedSample> samples;
  samples.reserve(wanted.size());
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    if (!errors[i].empty()) {
      report.skipped.emplace_back(wanted[i]->rel_path, errors[i]);
      continue;
    }
    samples.push_back({static_cast<std::uint32_t>(wanted[i]->class_id),
                       std::move(grids[i])});
  }
  write_voxel_cache(cache_path, samples, dims);
  report.written = static_cast<std::int64_t>(samples.size());
  return report;
}

int cmd_voxelize(const std::string& input_dir, const std::string& output_dir, int dims,
                 std::uint64_t seed) {
  (void)seed;  // recorded for provenance; surface voxelization is deterministic
  if (dims < 1) throw Error(ErrorKind::kConfig, "--dims must be >= 1");
  const std::array<std::int32_t, 3> grid_dims{dims, dims, dims};

  DatasetIndex index = scan_modelnet_tree(input_dir);
  fs::create_directories(output_dir);
  write_index_json(index, grid_dims, (fs::path(output_dir) / "index.json").string());

  VoxelizeReport train_report = voxelize_split(
      index, input_dir, Split::kTrain, grid_dims,
      (fs::path(output_dir) / "train.voxl").string());
  VoxelizeReport test_report = voxelize_split(
      index, input_dir, Split::kTest, grid_dims,
      (fs::path(output_dir) / "test.voxl").string());

  const std::int64_t total = static_cast<std::int64_t>(index.entries.size());
  const std::int64_t skips = static_cast<std::int64_t>(train_report.skipped.size() +
                                                       test_report.skipped.size());
  {
    const fs::path target = fs::path(output_dir) / "skipped.txt";
    const fs::path tmp = target.string() + ".tmp";
    std::ofstream os(tmp, std::ios::trunc);
    for (const auto& [path, reason] : train_report.skipped) os << path << '\t' << reason << '\n';
    for (const auto& [path, reason] : test_report.skipped) os << path << '\t' << reason << '\n';
    os.close();
    fs::rename(tmp, target);
  }

  std::printf("classes: %zu\n", index.classes.size());
  std::printf("train: %lld written, %zu skipped\n",
              static_cast<long long>(train_report.written), train_report.skipped.size());
  std::printf("test: %lld written, %zu skipped\n",
              static_cast<long long>(test_report.written), test_report.skipped.size());
  if (skips * 100 > total) {
    std::fprintf(stderr, "error: %lld of %lld meshes skipped (> 1%%), see skipped.txt\n",
                 static_cast<long long>(skips), static_cast<long long>(total));
    return kExitInput;
  }
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct LoadedData {
  Dataset train;
  Dataset test;
};

LoadedData load_datasets(const RunConfig& cfg, bool train_needs_meshes) {
  if (cfg.data_dir.empty()) {
    throw Error(ErrorKind::kData, "data_dir is not set; run `volres voxelize` first");
  }
  std::array<std::int32_t, 3> dims{30, 30, 30};
  DatasetIndex index =
      read_index_json((fs::path(cfg.data_dir) / "index.json").string(), &dims);

  LoadedData data;
  data.test = dataset_from_cache((fs::path(cfg.data_dir) / "test.voxl").string(),
                                 index.classes);
  if (train_needs_meshes) {
    if (cfg.mesh_root.empty()) {
      throw Error(ErrorKind::kData,
                  "augment requires mesh_root pointing at the original OFF tree");
    }
    data.train = dataset_from_meshes(index, cfg.mesh_root, Split::kTrain, dims,
                                     /*keep_meshes=*/true);
  } else {
    data.train = dataset_from_cache((fs::path(cfg.data_dir) / "train.voxl").string(),
                                    index.classes);
  }
  return data;
}

NetworkSpec spec_from_config(const RunConfig& cfg, const Dataset& train_data) {
  NetworkSpec spec;
  spec.k = cfg.k;
  spec.num_classes = static_cast<int>(train_data.classes.size());
  spec.dropout_rate = cfg.dropout;
  spec.dtype = cfg.parsed_dtype();
  spec.input_dim = train_data.dims[0];
  return spec;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw Error(ErrorKind::kConfig, "--out is required");
  TrainConfig tc = cfg.train_config();
  cfg.echo_resolved(cfg.out_dir);

  LoadedData data = load_datasets(cfg, tc.augment);
  NetworkSpec spec = spec_from_config(cfg, data.train);
  Network net = build(spec);
  Rng init_rng(tc.seed);
  init_weights(net, init_rng);

  ParamCounts counts = count_parameters(net);
  std::printf("network k=%d, classes=%d, parameters=%lld (+%lld running stats)\n",
              spec.k, spec.num_classes, static_cast<long long>(counts.trainable),
              static_cast<long long>(counts.with_running_stats - counts.trainable));

  TrainResult result = train(net, data.train, data.test, tc);
  for (const EpochRecord& r : result.records) {
    std::printf("epoch %d: train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f "
                "lr=%.3g (%.1fs)\n",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.lr,
                r.seconds);
  }
  std::printf("snapshots: %zu under %s/snapshots\n", result.snapshot_paths.size(),
              cfg.out_dir.c_str());
  return kExitOk;
}

// -------------------------------------------------------------------- eval

bool glob_match(const std::string& pattern, const std::string& name) {
  // '*' and '?' on the filename portion only.
  std::size_t p = 0, n = 0, star = std::string::npos, star_n = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == name[n] || pattern[p] == '?')) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      star_n = n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++star_n;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  const fs::path full(pattern);
  const std::string filename = full.filename().string();
  const fs::path dir = full.has_parent_path() ? full.parent_path() : fs::path(".");
  if (dir.string().find_first_of("*?") != std::string::npos) {
    throw Error(ErrorKind::kConfig,
                "wildcards are only supported in the filename portion: " + pattern);
  }
  std::vector<std::string> matches;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && glob_match(filename, entry.path().filename().string())) {
        matches.push_back(entry.path().string());
      }
    }
  }
  std::sort(matches.begin(), matches.end());
  return matches;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoints,
             const std::string& ensemble_rule, const std::string& split_name_arg,
             const std::string& report_dir) {
  std::vector<std::string> members = expand_glob(checkpoints);
  if (members.empty()) {
    std::fprintf(stderr, "error: no checkpoints match %s\n", checkpoints.c_str());
    return kExitInput;
  }
  const Split split = [&] {
    if (split_name_arg == "train") return Split::kTrain;
    if (split_name_arg == "test") return Split::kTest;
    throw Error(ErrorKind::kConfig, "--split must be train or test");
  }();

  if (cfg.data_dir.empty()) {
    throw Error(ErrorKind::kData, "data_dir is not set; run `volres voxelize` first");
  }
  DatasetIndex index =
      read_index_json((fs::path(cfg.data_dir) / "index.json").string());
  Dataset data = dataset_from_cache(
      (fs::path(cfg.data_dir) / (std::string(split_name(split)) + ".voxl")).string(),
      index.classes);

  if (!report_dir.empty()) cfg.echo_resolved(report_dir);

  auto write_report = [&](const ConfusionMatrix& confusion) {
    if (report_dir.empty()) return;
    fs::create_directories(report_dir);
    {
      std::ofstream os(fs::path(report_dir) / "confusion.json", std::ios::trunc);
      os << confusion.to_json() << '\n';
    }
    {
      std::ofstream os(fs::path(report_dir) / "confusion.csv", std::ios::trunc);
      os << confusion.to_csv();
    }
  };

  if (ensemble_rule == "none") {
    double best_acc = -1.0;
    std::size_t best_index = 0;
    std::vector<EvalResult> per_member;
    for (std::size_t i = 0; i < members.size(); ++i) {
      Network net = load_checkpoint(members[i]);
      EvalResult r = evaluate(net, data, cfg.batch_size);
      std::printf("%s: accuracy %.4f (loss %.4f)\n", members[i].c_str(), r.accuracy,
                  r.loss);
      if (r.accuracy > best_acc) {
        best_acc = r.accuracy;
        best_index = i;
      }
      per_member.push_back(std::move(r));
    }
    if (members.size() > 1) {
      std::printf("best member: %s (accuracy %.4f)\n", members[best_index].c_str(),
                  best_acc);
    }
    write_report(per_member[best_index].confusion);
    if (!report_dir.empty()) {
      std::ofstream os(fs::path(report_dir) / "members.csv", std::ios::trunc);
      os << "checkpoint,accuracy,loss\n";
      for (std::size_t i = 0; i < members.size(); ++i) {
        os << members[i] << ',' << per_member[i].accuracy << ',' << per_member[i].loss
           << '\n';
      }
    }
    return kExitOk;
  }

  EnsembleSpec spec;
  spec.members = members;
  if (ensemble_rule == "mean-softmax") {
    spec.combine = CombineRule::kMeanSoftmax;
  } else if (ensemble_rule == "weight-average") {
    spec.combine = CombineRule::kWeightAverage;
  } else {
    throw Error(ErrorKind::kConfig,
                "--ensemble must be mean-softmax, weight-average or none");
  }
  Ensemble ensemble = Ensemble::load(spec);

  std::vector<std::pair<std::string, double>> member_rows;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    EvalResult r = evaluate(ensemble.member(i), data, cfg.batch_size);
    member_rows.emplace_back(members[i], r.accuracy);
    std::printf("member %s: accuracy %.4f\n", members[i].c_str(), r.accuracy);
  }
  EvalResult r = evaluate_ensemble(ensemble, data, cfg.batch_size);
  std::printf("ensemble (%s, %zu members): accuracy %.4f\n", ensemble_rule.c_str(),
              members.size(), r.accuracy);
  write_report(r.confusion);
  if (!report_dir.empty()) {
    std::ofstream os(fs::path(report_dir) / "members.csv", std::ios::trunc);
    os << "checkpoint,accuracy\n";
    for (const auto& [path, acc] : member_rows) os << path << ',' << acc << '\n';
  }
  return kExitOk;
}

// --------------------------------------------------------------- gradcheck

int cmd_gradcheck(std::uint64_t seed, const std::string& inject) {
  GradCheckFault fault = GradCheckFault::kNone;
  if (inject == "conv3d-sign-flip") {
    fault = GradCheckFault::kConv3dSignFlip;
  } else if (!inject.empty() && inject != "none") {
    throw Error(ErrorKind::kConfig, "--inject must be none or conv3d-sign-flip");
  }

  std::vector<GradCheckResult> results = run_gradient_checks(seed, fault);
  std::vector<std::string> failing;
  for (const GradCheckResult& r : results) {
    std::printf("%-20s max_rel_err %.3e (tolerance %.0e) %s\n", r.op.c_str(),
                r.max_rel_err, r.tolerance, r.pass ? "PASS" : "FAIL");
    if (!r.pass) failing.push_back(r.op);
  }
  if (!failing.empty()) {
    std::string names;
    for (const std::string& op : failing) {
      if (!names.empty()) names += ", ";
      names += op;
    }
    std::fprintf(stderr, "gradient check failed for: %s\n", names.c_str());
    return kExitVerification;
  }
  return kExitOk;
}

// ------------------------------------------------------------------- sweep

int cmd_sweep(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw Error(ErrorKind::kConfig, "--out is required");
  if (cfg.grid.empty()) {
    throw Error(ErrorKind::kConfig, "config has no \"grid\" axes to sweep");
  }
  TrainConfig base = cfg.train_config();
  cfg.echo_resolved(cfg.out_dir);

  std::vector<SweepAxis> axes;
  for (const auto& [key, values] : cfg.grid) axes.push_back({key, values});

  LoadedData data = load_datasets(cfg, base.augment);
  std::vector<SweepCellResult> results =
      sweep(base, axes, data.train, data.test, cfg.out_dir);
  std::printf("swept %zu cells -> %s/sweep.csv\n", results.size(), cfg.out_dir.c_str());
  for (const SweepCellResult& r : results) {
    std::printf("cell %lld: val_acc=%.4f%s\n", static_cast<long long>(r.cell), r.val_acc,
                r.failed ? (" FAILED: " + r.error).c_str() : "");
  }
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"volumetric wide-residual-network trainer"};
  app.require_subcommand(1);

  // voxelize
  auto* vox = app.add_subcommand("voxelize", "convert an OFF tree into voxel caches");
  std::string vox_input, vox_output;
  int vox_dims = 30;
  std::uint64_t vox_seed = 0;
  vox->add_option("--input-dir", vox_input, "ModelNet-style directory")->required();
  vox->add_option("--output", vox_output, "cache output directory")->required();
  vox->add_option("--dims", vox_dims, "grid extent per axis");
  vox->add_option("--seed", vox_seed, "recorded provenance seed");

  // shared config/flag plumbing for train/eval/sweep
  struct Flags {
    std::optional<std::string> config;
    std::optional<int> k, batch_size, epochs, snapshot_every, dims;
    std::optional<double> lr, dropout;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> optimizer, dtype, data_dir, mesh_root, out_dir;
    std::optional<bool> augment;
  };
  auto add_common = [](CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config file");
    cmd->add_option("--k", f.k, "widening factor");
    cmd->add_option("--batch-size", f.batch_size);
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--optimizer", f.optimizer, "nadam | sgd-nesterov");
    cmd->add_option("--dropout", f.dropout);
    cmd->add_option("--epochs", f.epochs);
    cmd->add_option("--snapshot-every", f.snapshot_every);
    cmd->add_option("--seed", f.seed);
    cmd->add_option("--dtype", f.dtype, "f32 | f64");
    cmd->add_option("--data", f.data_dir, "voxel cache directory");
    cmd->add_option("--mesh-root", f.mesh_root, "original OFF tree (for augmentation)");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--augment", f.augment, "augment training samples");
  };
  auto resolve = [](const Flags& f) {
    RunConfig cfg;
    if (f.config) cfg.load_file(*f.config);
    if (f.k) cfg.k = *f.k;
    if (f.batch_size) cfg.batch_size = *f.batch_size;
    if (f.epochs) cfg.epochs = *f.epochs;
    if (f.snapshot_every) cfg.snapshot_every = *f.snapshot_every;
    if (f.lr) cfg.lr = *f.lr;
    if (f.dropout) cfg.dropout = *f.dropout;
    if (f.seed) cfg.seed = *f.seed;
    if (f.optimizer) cfg.optimizer = *f.optimizer;
    if (f.dtype) cfg.dtype = *f.dtype;
    if (f.data_dir) cfg.data_dir = *f.data_dir;
    if (f.mesh_root) cfg.mesh_root = *f.mesh_root;
    if (f.out_dir) cfg.out_dir = *f.out_dir;
    if (f.augment) cfg.augment = *f.augment;
    return cfg;
  };

  auto* train_cmd = app.add_subcommand("train", "train a network");
  Flags train_flags;
  add_common(train_cmd, train_flags);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints or an ensemble");
  Flags eval_flags;
  add_common(eval_cmd, eval_flags);
  std::string eval_checkpoints, eval_rule = "none", eval_split = "test", eval_report;
  eval_cmd->add_option("--checkpoints", eval_checkpoints, "checkpoint path or glob")
      ->required();
  eval_cmd->add_option("--ensemble", eval_rule, "mean-softmax | weight-average | none");
  eval_cmd->add_option("--split", eval_split, "train | test");
  eval_cmd->add_option("--report-dir", eval_report, "where to write confusion reports");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference verification");
  std::uint64_t grad_seed = 0;
  std::string grad_inject = "none";
  grad_cmd->add_option("--seed", grad_seed);
  grad_cmd->add_option("--inject", grad_inject,
                       "fault injection for harness self-tests (conv3d-sign-flip)");

  auto* sweep_cmd = app.add_subcommand("sweep", "grid search over config axes");
  Flags sweep_flags;
  add_common(sweep_cmd, sweep_flags);

  CLI11_PARSE(app, argc, argv);

  if (vox->parsed()) return cmd_voxelize(vox_input, vox_output, vox_dims, vox_seed);
  if (train_cmd->parsed()) return cmd_train(resolve(train_flags));
  if (eval_cmd->parsed()) {
    return cmd_eval(resolve(eval_flags), eval_checkpoints, eval_rule, eval_split,
                    eval_report);
  }
  if (grad_cmd->parsed()) return cmd_gradcheck(grad_seed, grad_inject);
  if (sweep_cmd->parsed()) return cmd_sweep(resolve(sweep_flags));
  return kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == ErrorKind::kDivergence ? kExitDivergence : kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
}
