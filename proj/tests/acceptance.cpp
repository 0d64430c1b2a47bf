// Acceptance suite: one criterion per line, non-zero exit if any gating
// criterion fails. Run it via `ctest -R acceptance` or directly from the
// build tree.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "volres/checkpoint.hpp"
#include "volres/dataset.hpp"
#include "volres/gradcheck.hpp"
#include "volres/train.hpp"

using namespace volres;
namespace fs = std::filesystem;

namespace {

fs::path workspace_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "volres_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype() || a.shape() != b.shape()) return false;
  const std::size_t bytes = static_cast<std::size_t>(a.size()) * dtype_size(a.dtype());
  const void* pa = a.dtype() == Dtype::kF32
                       ? static_cast<const void*>(a.data<float>().data())
                       : static_cast<const void*>(a.data<double>().data());
  const void* pb = b.dtype() == Dtype::kF32
                       ? static_cast<const void*>(b.data<float>().data())
                       : static_cast<const void*>(b.data<double>().data());
  return std::memcmp(pa, pb, bytes) == 0;
}

// 1. Per-op finite differences <= 1e-5, end-to-end reduced network <= 1e-4.
bool criterion_gradients(std::string& detail) {
  const auto results = run_gradient_checks(20260811);
  double worst_op = 0.0, end_to_end = 0.0;
  bool ok = true;
  for (const GradCheckResult& r : results) {
    ok = ok && r.pass;
    if (r.op == "network_end_to_end") {
      end_to_end = r.max_rel_err;
    } else {
      worst_op = std::max(worst_op, r.max_rel_err);
    }
  }
  std::ostringstream os;
  os << "worst op rel err " << worst_op << ", end-to-end " << end_to_end;
  detail = os.str();
  return ok;
}

// 2. im2col-lowered convolution equals the direct loop bitwise on 50 shapes.
bool criterion_conv_equivalence(std::string& detail) {
  Rng shapes(0xC0FFEE);
  int exact = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(shapes.uniform_index(2));
    const std::int64_t ci = 1 + static_cast<std::int64_t>(shapes.uniform_index(3));
    const std::int64_t co = 1 + static_cast<std::int64_t>(shapes.uniform_index(3));
    const std::int64_t e = 3 + static_cast<std::int64_t>(shapes.uniform_index(5));
    const int stride = 1 + static_cast<int>(shapes.uniform_index(2));
    const int ksize = shapes.uniform() < 0.25 ? 1 : 3;
    const int pad = ksize == 3 ? static_cast<int>(shapes.uniform_index(2)) : 0;

    Tensor x = Tensor::zeros({n, ci, e, e, e}, Dtype::kF64);
    Tensor w = Tensor::zeros({co, ci, ksize, ksize, ksize}, Dtype::kF64);
    Tensor b = Tensor::zeros({co}, Dtype::kF64);
    Rng rng(7000 + static_cast<std::uint64_t>(trial));
    fill_uniform(x, rng, -1.0, 1.0);
    fill_normal(w, rng, 0.0, 0.4);
    fill_uniform(b, rng, -0.5, 0.5);

    Conv3dOp op;
    if (bitwise_equal(op.forward(x, w, b, stride, pad),
                      oracle::conv3d_direct(x, w, b, stride, pad))) {
      ++exact;
    }
  }
  detail = std::to_string(exact) + "/50 shapes bitwise equal";
  return exact == 50;
}

// 3. Fresh k in {1, 8} networks: initial loss ln(40) +- 0.15.
bool criterion_init_loss(std::string& detail) {
  std::ostringstream os;
  bool ok = true;
  for (int k : {1, 8}) {
    NetworkSpec spec;
    spec.k = k;
    Network net = build(spec);
    Rng rng(2718);
    init_weights(net, rng);
    Tensor x = Tensor::zeros({8, 1, 30, 30, 30}, Dtype::kF32);
    Rng data_rng(99);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      if (data_rng.uniform() < 0.5) x.set_value(i, 1.0);
    }
    std::vector<std::int32_t> labels;
    for (int i = 0; i < 8; ++i) {
      labels.push_back(static_cast<std::int32_t>(data_rng.uniform_index(40)));
    }
    Rng dropout_rng(5);
    Tensor logits = net.forward(x, Mode::kTrain, &dropout_rng);
    SoftmaxXentOp loss_op;
    const double loss = loss_op.forward(logits, labels).loss;
    os << "k=" << k << " loss " << loss << "  ";
    ok = ok && std::abs(loss - std::log(40.0)) <= 0.15;
  }
  detail = os.str() + "(ln 40 = 3.6889)";
  return ok;
}

// 4. Counts strictly increase; adjacent ratios in [2.5, 4.0) and
// non-decreasing. The reconciliation table against the published absolute
// counts is emitted; exact equality is documented, not required.
bool criterion_param_scaling(std::string& detail) {
  const int ks[5] = {1, 2, 4, 8, 16};
  const std::int64_t published[5] = {122032, 341688, 1081672, 3764328, 14826408};
  std::int64_t counts[5];
  std::int64_t counts_with_stats[5];
  for (int i = 0; i < 5; ++i) {
    NetworkSpec spec;
    spec.k = ks[i];
    Network net = build(spec);
    const ParamCounts c = count_parameters(net);
    counts[i] = c.trainable;
    counts_with_stats[i] = c.with_running_stats;
  }

  std::printf("    reconciliation against the published parameter table:\n");
  std::printf("    %4s %12s %14s %14s %8s\n", "k", "trainable", "with-bn-stats",
              "published", "ours/pub");
  for (int i = 0; i < 5; ++i) {
    std::printf("    %4d %12lld %14lld %14lld %8.3f\n", ks[i],
                static_cast<long long>(counts[i]),
                static_cast<long long>(counts_with_stats[i]),
                static_cast<long long>(published[i]),
                static_cast<double>(counts[i]) / static_cast<double>(published[i]));
  }

  bool ok = true;
  double prev_ratio = 0.0;
  std::ostringstream os;
  os << "ratios";
  for (int i = 1; i < 5; ++i) {
    ok = ok && counts[i] > counts[i - 1];
    const double ratio = static_cast<double>(counts[i]) / static_cast<double>(counts[i - 1]);
    char buf[16];
    std::snprintf(buf, sizeof(buf), " %.3f", ratio);
    os << buf;
    ok = ok && ratio >= 2.5 && ratio < 4.0 && ratio >= prev_ratio;
    prev_ratio = ratio;
  }
  os << " (published 2.80 3.17 3.48 3.94)";
  detail = os.str();
  return ok;
}

// 5. k=1 overfits 2 classes x 10 samples to 100% train accuracy within 200
// epochs.
bool criterion_overfit(std::string& detail) {
  Dataset train_ds = fixtures::toy_dataset(10, {30, 30, 30}, 61, false);
  NetworkSpec spec;
  spec.k = 1;
  spec.num_classes = 2;
  spec.dropout_rate = 0.0;
  Network net = build(spec);
  Rng rng(77);
  init_weights(net, rng);

  TrainConfig cfg;
  cfg.k = 1;
  cfg.batch_size = 10;
  cfg.epochs = 1;
  cfg.optimizer.lr = 1e-3;
  cfg.dropout_rate = 0.0;
  cfg.augment = false;
  cfg.snapshot_every = 0;
  cfg.seed = 3;

  for (int epoch = 1; epoch <= 200; ++epoch) {
    cfg.seed = 3 + static_cast<std::uint64_t>(epoch);  // fresh shuffle per call
    TrainResult r = train(net, train_ds, train_ds, cfg);
    if (r.records.back().train_acc == 1.0) {
      detail = "100% train accuracy at epoch " + std::to_string(epoch);
      return true;
    }
  }
  detail = "did not reach 100% within 200 epochs";
  return false;
}

// 6. Voxelizer vs point-sampling oracle; exact permutation under 90-degree
// rotations.
bool criterion_voxelizer(std::string& detail) {
  Rng rng(404);
  double worst = 1.0;
  for (int trial = 0; trial < 20; ++trial) {
    TriangleMesh mesh = normalize_mesh(
        fixtures::random_mesh(rng, 50 + static_cast<int>(rng.uniform_index(40)), 6.0),
        30.0);
    VoxelGrid sat = voxelize(mesh, {30, 30, 30});
    VoxelGrid sampled =
        oracle::voxelize_point_sampling(mesh, {30, 30, 30}, 1000,
                                        50 + static_cast<std::uint64_t>(trial));
    std::int64_t agree = 0;
    for (std::int64_t i = 0; i < sat.total(); ++i) {
      if (sat.get(i) == sampled.get(i)) ++agree;
    }
    worst = std::min(worst, static_cast<double>(agree) / static_cast<double>(sat.total()));
  }

  TriangleMesh box = fixtures::box_mesh({-8.3, -4.7, -2.1}, {6.9, 9.1, 11.7});
  VoxelGrid base = voxelize(box, {30, 30, 30});
  RotationSpec quarter;
  quarter.axis = {0, 0, 1};
  quarter.angle = 3.14159265358979323846 / 2.0;
  VoxelGrid rotated = voxelize(rotate_mesh(box, quarter), {30, 30, 30});
  VoxelGrid permuted = VoxelGrid::empty({30, 30, 30});
  for (std::int32_t z = 0; z < 30; ++z) {
    for (std::int32_t y = 0; y < 30; ++y) {
      for (std::int32_t x = 0; x < 30; ++x) {
        if (base.get(base.flat(z, y, x))) permuted.set(permuted.flat(z, x, 29 - y));
      }
    }
  }
  const bool permutation_exact = rotated == permuted;

  std::ostringstream os;
  os << "worst agreement " << worst * 100.0 << "%, 90-degree permutation "
     << (permutation_exact ? "exact" : "BROKEN");
  detail = os.str();
  return worst >= 0.995 && permutation_exact;
}

// 7. Rotation isometry within 1e-10 across 100 random rotations; zero angle
// is the bitwise identity.
bool criterion_rotation(std::string& detail) {
  Rng rng(505);
  TriangleMesh mesh = fixtures::random_mesh(rng, 14, 5.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    TriangleMesh rotated = rotate_mesh(mesh, RotationSpec::random(rng));
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      double na = 0, nb = 0;
      for (int a = 0; a < 3; ++a) {
        na += mesh.vertices[i][a] * mesh.vertices[i][a];
        nb += rotated.vertices[i][a] * rotated.vertices[i][a];
      }
      worst = std::max(worst, std::abs(std::sqrt(na) - std::sqrt(nb)));
    }
    for (std::size_t i = 1; i < mesh.vertices.size(); ++i) {
      double da = 0, db = 0;
      for (int a = 0; a < 3; ++a) {
        const double ea = mesh.vertices[i][a] - mesh.vertices[i - 1][a];
        const double eb = rotated.vertices[i][a] - rotated.vertices[i - 1][a];
        da += ea * ea;
        db += eb * eb;
      }
      worst = std::max(worst, std::abs(std::sqrt(da) - std::sqrt(db)));
    }
  }

  RotationSpec zero;
  zero.axis = rng.unit_vector();
  zero.angle = 0.0;
  TriangleMesh same = rotate_mesh(mesh, zero);
  bool identity = true;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      identity = identity &&
                 std::memcmp(&same.vertices[i][a], &mesh.vertices[i][a], 8) == 0;
    }
  }
  std::ostringstream os;
  os << "worst isometry error " << worst << ", zero-angle "
     << (identity ? "bitwise identity" : "NOT identity");
  detail = os.str();
  return worst <= 1e-10 && identity;
}

// 8. Mean-softmax over identical checkpoints is bitwise the single model;
// ten epochs leave ten loadable fingerprint-consistent snapshots.
bool criterion_ensemble_identities(std::string& detail) {
  const fs::path dir = workspace_dir() / "criterion8";
  Dataset train_ds = fixtures::toy_dataset(4, {16, 16, 16}, 71, false);
  Dataset val_ds = fixtures::toy_dataset(2, {16, 16, 16}, 72, false);

  NetworkSpec spec;
  spec.k = 1;
  spec.num_classes = 2;
  spec.dropout_rate = 0.0;
  spec.input_dim = 16;
  Network net = build(spec);
  Rng rng(11);
  init_weights(net, rng);

  TrainConfig cfg;
  cfg.k = 1;
  cfg.batch_size = 4;
  cfg.epochs = 10;
  cfg.snapshot_every = 1;
  cfg.dropout_rate = 0.0;
  cfg.augment = false;
  cfg.optimizer.lr = 5e-4;
  cfg.seed = 21;
  cfg.out_dir = dir.string();
  TrainResult result = train(net, train_ds, val_ds, cfg);

  bool snapshots_ok = result.snapshot_paths.size() == 10;
  const std::uint64_t fp = net.spec().fingerprint();
  std::set<std::string> distinct;
  for (const std::string& path : result.snapshot_paths) {
    distinct.insert(path);
    try {
      snapshots_ok = snapshots_ok && load_checkpoint(path).spec().fingerprint() == fp;
    } catch (const Error&) {
      snapshots_ok = false;
    }
  }
  snapshots_ok = snapshots_ok && distinct.size() == 10;

  // N identical members vs the single model, bitwise.
  std::vector<std::string> copies;
  for (int i = 0; i < 3; ++i) {
    const std::string path = (dir / ("id" + std::to_string(i) + ".ckpt")).string();
    save_checkpoint(net, path);
    copies.push_back(path);
  }
  Batch batch = *BatchStream(train_ds, BatchOptions{8, false, false, 0, 0,
                                                    Dtype::kF32})
                     .next();
  Tensor single = softmax_rows(net.forward(batch.input, Mode::kEval));
  Ensemble ensemble =
      Ensemble::load({copies, CombineRule::kMeanSoftmax, Provenance::kSnapshot});
  const bool mean_identity = bitwise_equal(single, ensemble.predict(batch.input));

  detail = std::string("10 snapshots ") + (snapshots_ok ? "ok" : "BROKEN") +
           ", identical-member mean-softmax " +
           (mean_identity ? "bitwise equal" : "DIFFERS");
  return snapshots_ok && mean_identity;
}

// 9. Independent ensembling costs about N times one snapshot run (N=5).
bool criterion_cost_contrast(std::string& detail) {
  const int members = 5;
  Dataset train_ds = fixtures::toy_dataset(20, {24, 24, 24}, 81, false);
  Dataset val_ds = fixtures::toy_dataset(4, {24, 24, 24}, 82, false);

  NetworkSpec spec;
  spec.k = 1;
  spec.num_classes = 2;
  spec.dropout_rate = 0.0;
  spec.input_dim = 24;

  TrainConfig cfg;
  cfg.k = 1;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.snapshot_every = 1;
  cfg.dropout_rate = 0.0;
  cfg.augment = false;
  cfg.seed = 1;
  cfg.out_dir = (workspace_dir() / "criterion9").string();

  using clock = std::chrono::steady_clock;

  // One training run, snapshots saved every epoch.
  const auto snap_start = clock::now();
  {
    Network net = build(spec);
    Rng rng(cfg.seed);
    init_weights(net, rng);
    train(net, train_ds, val_ds, cfg);
  }
  const double snapshot_seconds =
      std::chrono::duration<double>(clock::now() - snap_start).count();

  // N independent runs with derived seeds, no snapshots.
  TrainConfig independent = cfg;
  independent.snapshot_every = 0;
  independent.out_dir.clear();
  const auto indep_start = clock::now();
  for (int m = 0; m < members; ++m) {
    independent.seed = derive_member_seed(cfg.seed, m);
    Network net = build(spec);
    Rng rng(independent.seed);
    init_weights(net, rng);
    train(net, train_ds, val_ds, independent);
  }
  const double independent_seconds =
      std::chrono::duration<double>(clock::now() - indep_start).count();

  const double ratio = independent_seconds / snapshot_seconds;
  std::ostringstream os;
  os << "snapshot " << snapshot_seconds << "s, independent " << independent_seconds
     << "s, ratio " << ratio << " (target " << members << " +- 20%)";
  detail = os.str();
  return ratio >= members * 0.8 && ratio <= members * 1.2;
}

// 10. Bitwise determinism of loss trajectories and voxel caches.
bool criterion_determinism(std::string& detail) {
  Dataset train_ds = fixtures::toy_dataset(4, {16, 16, 16}, 91, false);
  Dataset val_ds = fixtures::toy_dataset(2, {16, 16, 16}, 92, false);
  auto run = [&] {
    NetworkSpec spec;
    spec.k = 1;
    spec.num_classes = 2;
    spec.dropout_rate = 0.3;
    spec.input_dim = 16;
    spec.dtype = Dtype::kF64;
    Network net = build(spec);
    Rng rng(123);
    init_weights(net, rng);
    TrainConfig cfg;
    cfg.k = 1;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    cfg.snapshot_every = 0;
    cfg.dropout_rate = 0.3;
    cfg.augment = false;
    cfg.dtype = Dtype::kF64;
    cfg.seed = 5;
    return train(net, train_ds, val_ds, cfg);
  };
  TrainResult a = run();
  TrainResult b = run();
  bool trajectories = a.records.size() == b.records.size();
  for (std::size_t i = 0; trajectories && i < a.records.size(); ++i) {
    trajectories = a.records[i].train_loss == b.records[i].train_loss &&
                   a.records[i].val_loss == b.records[i].val_loss;
  }

  // Voxel caches: same tree, two scans and writes, byte-identical files.
  const fs::path tree = workspace_dir() / "criterion10_tree";
  fixtures::write_fixture_tree(tree, {"alpha", "beta"}, 3, 2);
  DatasetIndex index = scan_modelnet_tree(tree.string());
  auto build_cache = [&](const std::string& name) {
    Dataset ds = dataset_from_meshes(index, tree.string(), Split::kTrain, {30, 30, 30},
                                     false);
    std::vector<CachedSample> samples;
    for (const DataSample& s : ds.samples) {
      samples.push_back({static_cast<std::uint32_t>(s.class_id), s.grid});
    }
    const std::string path = (workspace_dir() / name).string();
    write_voxel_cache(path, samples, {30, 30, 30});
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  const bool caches = build_cache("c10_a.voxl") == build_cache("c10_b.voxl");

  detail = std::string("trajectories ") + (trajectories ? "bitwise equal" : "DIFFER") +
           ", caches " + (caches ? "byte-identical" : "DIFFER");
  return trajectories && caches;
}

// 11. Plateau scheduler: exactly one drop after `patience` epochs on a
// constant stream, new_lr = lr * 0.02; no drop on an improving stream.
bool criterion_scheduler(std::string& detail) {
  PlateauSchedule sched;
  double lr = 0.0002;
  int drops = 0, drop_epoch = -1;
  for (int epoch = 1; epoch <= sched.patience + 1; ++epoch) {
    const double next = plateau_update(sched, 1.0, lr);
    if (next != lr) {
      ++drops;
      drop_epoch = epoch;
    }
    lr = next;
  }
  const bool constant_ok = drops == 1 && drop_epoch == sched.patience + 1 &&
                           lr == 0.0002 * 0.02;

  PlateauSchedule improving;
  double lr2 = 0.0002;
  bool improving_ok = true;
  for (int epoch = 0; epoch < 30; ++epoch) {
    lr2 = plateau_update(improving, 3.0 - 0.01 * epoch, lr2);
    improving_ok = improving_ok && lr2 == 0.0002;
  }

  std::ostringstream os;
  os << "constant stream: " << drops << " drop at epoch " << drop_epoch << " to " << lr
     << "; improving stream " << (improving_ok ? "never drops" : "DROPPED");
  detail = os.str();
  return constant_ok && improving_ok;
}

// 12. Dataset accounting at ModelNet-40 scale (synthesized tree: 40 classes,
// 9,843 train + 2,468 test = 12,311) and exact fixture counts.
bool criterion_dataset_accounting(std::string& detail) {
  const fs::path big = workspace_dir() / "modelnet40_scale";
  if (!fs::exists(big / "done.marker")) {
    std::vector<int> train_counts(40, 9843 / 40), test_counts(40, 2468 / 40);
    for (int i = 0; i < 9843 % 40; ++i) ++train_counts[static_cast<std::size_t>(i)];
    for (int i = 0; i < 2468 % 40; ++i) ++test_counts[static_cast<std::size_t>(i)];
    for (int c = 0; c < 40; ++c) {
      char cls[32];
      std::snprintf(cls, sizeof(cls), "class_%02d", c);
      for (const char* split : {"train", "test"}) {
        const fs::path dir = big / cls / split;
        fs::create_directories(dir);
        const int count = std::string(split) == "train"
                              ? train_counts[static_cast<std::size_t>(c)]
                              : test_counts[static_cast<std::size_t>(c)];
        for (int i = 0; i < count; ++i) {
          char name[48];
          std::snprintf(name, sizeof(name), "%s_%04d.off", cls, i);
          std::ofstream os(dir / name, std::ios::trunc);
          os << fixtures::kTetraOff;
        }
      }
    }
    std::ofstream marker(big / "done.marker");
  }

  DatasetIndex index = scan_modelnet_tree(big.string());
  const bool scale_ok = index.classes.size() == 40 &&
                        index.count(Split::kTrain) == 9843 &&
                        index.count(Split::kTest) == 2468 &&
                        static_cast<std::int64_t>(index.entries.size()) == 12311;

  const fs::path tiny = workspace_dir() / "tiny_tree";
  fixtures::write_fixture_tree(tiny, {"mug", "vase"}, 3, 2);
  DatasetIndex tiny_index = scan_modelnet_tree(tiny.string());
  const bool tiny_ok = tiny_index.classes.size() == 2 &&
                       tiny_index.count(Split::kTrain) == 6 &&
                       tiny_index.count(Split::kTest) == 4;

  std::ostringstream os;
  os << "40-class tree: " << index.count(Split::kTrain) << " train / "
     << index.count(Split::kTest) << " test / " << index.entries.size() << " total; "
     << "fixture counts " << (tiny_ok ? "exact" : "WRONG");
  detail = os.str();
  return scale_ok && tiny_ok;
}

struct Criterion {
  int id;
  const char* name;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "gradient suite (per-op 1e-5, end-to-end 1e-4)", criterion_gradients},
      {2, "convolution dual-route bitwise equivalence", criterion_conv_equivalence},
      {3, "init loss ln(40) +- 0.15 for k in {1,8}", criterion_init_loss},
      {4, "parameter-count scaling and reconciliation", criterion_param_scaling},
      {5, "overfit capacity (2x10 samples, k=1)", criterion_overfit},
      {6, "voxelizer oracle agreement and 90-degree permutation", criterion_voxelizer},
      {7, "rotation isometry and zero-angle identity", criterion_rotation},
      {8, "ensemble identities and snapshot collection", criterion_ensemble_identities},
      {9, "ensembling cost contrast (N=5, +-20%)", criterion_cost_contrast},
      {10, "bitwise determinism (trajectories, caches)", criterion_determinism},
      {11, "plateau scheduler drop semantics", criterion_scheduler},
      {12, "dataset accounting at ModelNet-40 scale", criterion_dataset_accounting},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %2d: %s (%.1fs) -- %s\n", pass ? "PASS" : "FAIL", c.id,
                c.name, seconds, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failed;
  }
  std::printf("[NOTE] criterion 13: overnight ModelNet-40 smoke run is documented in "
              "README.md (non-gating; absolute published accuracies are out of scope).\n");
  if (failed == 0) {
    std::printf("all gating criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", failed);
  }
  return failed == 0 ? 0 : 1;
}
