#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "volres/ops.hpp"

using namespace volres;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Dtype dt, std::uint64_t seed,
                     double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), dt);
  Rng rng(seed);
  fill_uniform(t, rng, lo, hi);
  return t;
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

}  // namespace

TEST_CASE("conv3d zero input gives zero output") {
  Tensor x = Tensor::zeros({1, 2, 4, 4, 4}, Dtype::kF64);
  Tensor w = random_tensor({3, 2, 3, 3, 3}, Dtype::kF64, 41);
  Tensor b = Tensor::zeros({3}, Dtype::kF64);
  Conv3dOp op;
  Tensor y = op.forward(x, w, b, 1, 1);
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y.value_at(i) == 0.0);
}

TEST_CASE("conv3d impulse response of an all-ones kernel") {
  Tensor x = Tensor::zeros({1, 1, 7, 7, 7}, Dtype::kF64);
  x.set_value(((3 * 7) + 3) * 7 + 3, 1.0);  // center voxel
  Tensor w = Tensor::full({1, 1, 3, 3, 3}, 1.0, Dtype::kF64);
  Tensor b = Tensor::zeros({1}, Dtype::kF64);
  Conv3dOp op;
  Tensor y = op.forward(x, w, b, 1, 1);
  REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 7, 7, 7});
  for (std::int64_t z = 0; z < 7; ++z) {
    for (std::int64_t yy = 0; yy < 7; ++yy) {
      for (std::int64_t xx = 0; xx < 7; ++xx) {
        const bool neighborhood = std::abs(z - 3) <= 1 && std::abs(yy - 3) <= 1 &&
                                  std::abs(xx - 3) <= 1;
        CHECK(y.value_at((z * 7 + yy) * 7 + xx) == (neighborhood ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("conv3d channel mismatch is a dimension error") {
  Tensor x = Tensor::zeros({1, 2, 4, 4, 4}, Dtype::kF64);
  Tensor w = Tensor::zeros({3, 5, 3, 3, 3}, Dtype::kF64);
  Tensor b = Tensor::zeros({3}, Dtype::kF64);
  Conv3dOp op;
  try {
    op.forward(x, w, b, 1, 1);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
  }
}

TEST_CASE("conv3d lowered path equals the direct path bitwise in f64") {
  Rng shapes(424242);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(shapes.uniform_index(2));
    const std::int64_t ci = 1 + static_cast<std::int64_t>(shapes.uniform_index(3));
    const std::int64_t co = 1 + static_cast<std::int64_t>(shapes.uniform_index(3));
    const std::int64_t e = 3 + static_cast<std::int64_t>(shapes.uniform_index(5));
    const int stride = 1 + static_cast<int>(shapes.uniform_index(2));
    const int ksize = shapes.uniform() < 0.25 ? 1 : 3;
    const int pad = ksize == 3 ? static_cast<int>(shapes.uniform_index(2)) : 0;

    Tensor x = random_tensor({n, ci, e, e, e}, Dtype::kF64, 1000 + trial);
    Tensor w = random_tensor({co, ci, ksize, ksize, ksize}, Dtype::kF64, 2000 + trial);
    Tensor b = random_tensor({co}, Dtype::kF64, 3000 + trial);

    Conv3dOp op;
    Tensor lowered = op.forward(x, w, b, stride, pad);
    Tensor direct = oracle::conv3d_direct(x, w, b, stride, pad);
    CHECK(bitwise_equal(lowered, direct));
  }
}

TEST_CASE("batchnorm3d train mode forces batch moments to (0,1)") {
  Tensor x = random_tensor({4, 2, 4, 4, 4}, Dtype::kF64, 51, -3.0, 5.0);
  BNState st = BNState::create(2, Dtype::kF64);
  BatchNorm3dOp op;
  Tensor y = op.forward(x, st, Mode::kTrain);
  ChannelMoments m = channel_moments(y);
  for (int c = 0; c < 2; ++c) {
    CHECK(m.mean.value_at(c) == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(m.var.value_at(c) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("batchnorm3d gamma/beta rescale normalized input to (3,4)") {
  Tensor x = random_tensor({4, 1, 4, 4, 4}, Dtype::kF64, 52, -1.0, 1.0);
  // Normalize first so gamma/beta act on an exactly standardized input.
  BNState pre = BNState::create(1, Dtype::kF64, 0.99, 0.0);
  BatchNorm3dOp norm;
  Tensor xhat = norm.forward(x, pre, Mode::kTrain);

  BNState st = BNState::create(1, Dtype::kF64, 0.99, 0.0);
  st.gamma = Tensor::full({1}, 2.0, Dtype::kF64);
  st.beta = Tensor::full({1}, 3.0, Dtype::kF64);
  BatchNorm3dOp op;
  Tensor y = op.forward(xhat, st, Mode::kTrain);
  ChannelMoments m = channel_moments(y);
  CHECK(m.mean.value_at(0) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(m.var.value_at(0) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("batchnorm3d updates running statistics") {
  Tensor x = random_tensor({2, 1, 3, 3, 3}, Dtype::kF64, 53, 1.0, 2.0);
  BNState st = BNState::create(1, Dtype::kF64, 0.9, 1e-5);
  ChannelMoments batch = channel_moments(x);
  BatchNorm3dOp op;
  op.forward(x, st, Mode::kTrain);
  CHECK(st.running_mean.value_at(0) ==
        doctest::Approx(0.9 * 0.0 + 0.1 * batch.mean.value_at(0)));
  CHECK(st.running_var.value_at(0) ==
        doctest::Approx(0.9 * 1.0 + 0.1 * batch.var.value_at(0)));
}

TEST_CASE("batchnorm3d train mode rejects a degenerate batch") {
  Tensor x = Tensor::zeros({1, 3, 1, 1, 1}, Dtype::kF64);
  BNState st = BNState::create(3, Dtype::kF64);
  BatchNorm3dOp op;
  try {
    op.forward(x, st, Mode::kTrain);
    FAIL("expected degenerate batch error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
    CHECK(std::string(e.what()).find("degenerate") != std::string::npos);
  }
  CHECK_NOTHROW(op.forward(x, st, Mode::kEval));
}

TEST_CASE("relu examples") {
  Tensor x = Tensor::from_f64({3}, {-1.0, 0.0, 2.0});
  ReluOp op;
  Tensor y = op.forward(x);
  CHECK(y.value_at(0) == 0.0);
  CHECK(y.value_at(1) == 0.0);
  CHECK(y.value_at(2) == 2.0);
  Tensor dy = Tensor::full({3}, 1.0, Dtype::kF64);
  Tensor dx = op.backward(dy);
  CHECK(dx.value_at(0) == 0.0);
  CHECK(dx.value_at(1) == 0.0);  // gradient is zero exactly at the kink
  CHECK(dx.value_at(2) == 1.0);

  Tensor negatives = random_tensor({2, 2, 2, 2, 2}, Dtype::kF64, 61, -5.0, -0.1);
  ReluOp op2;
  Tensor zeros = op2.forward(negatives);
  for (std::int64_t i = 0; i < zeros.size(); ++i) CHECK(zeros.value_at(i) == 0.0);
  Tensor back = op2.backward(Tensor::full(negatives.shape(), 1.0, Dtype::kF64));
  for (std::int64_t i = 0; i < back.size(); ++i) CHECK(back.value_at(i) == 0.0);
}

TEST_CASE("maxpool3d constant input and the 30^3 -> 8^3 stem contract") {
  Tensor c7 = Tensor::full({1, 1, 8, 8, 8}, 7.0, Dtype::kF64);
  MaxPool3dOp op;
  Tensor y = op.forward(c7, 4, 4, false);
  REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 2, 2, 2});
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y.value_at(i) == 7.0);

  Tensor stem_in = random_tensor({1, 2, 30, 30, 30}, Dtype::kF32, 62);
  MaxPool3dOp stem;
  Tensor pooled = stem.forward(stem_in, 4, 4, true);
  CHECK(pooled.shape() == std::vector<std::int64_t>{1, 2, 8, 8, 8});
}

TEST_CASE("maxpool3d forward/backward match the loop oracle exactly") {
  Tensor x = random_tensor({2, 2, 8, 8, 8}, Dtype::kF64, 63, -4.0, 4.0);
  MaxPool3dOp op;
  Tensor y = op.forward(x, 2, 2, false);
  oracle::PoolOracle ref = oracle::maxpool_direct(x, 2, 2);
  CHECK(bitwise_equal(y, ref.output));

  Tensor dy = random_tensor(y.shape(), Dtype::kF64, 64);
  Tensor dx = op.backward(dy);
  Tensor expect = Tensor::zeros(x.shape(), Dtype::kF64);
  for (std::size_t i = 0; i < ref.argmax.size(); ++i) {
    const std::int64_t flat = ref.argmax[i];
    expect.set_value(flat, expect.value_at(flat) + dy.value_at(static_cast<std::int64_t>(i)));
  }
  CHECK(bitwise_equal(dx, expect));
}

TEST_CASE("global average pool examples") {
  Tensor c3 = Tensor::full({2, 3, 2, 2, 2}, 3.0, Dtype::kF64);
  GlobalAvgPool3dOp op;
  Tensor y = op.forward(c3);
  REQUIRE(y.shape() == std::vector<std::int64_t>{2, 3});
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y.value_at(i) == 3.0);

  Tensor onehot = Tensor::zeros({1, 1, 2, 2, 2}, Dtype::kF64);
  onehot.set_value(5, 1.0);
  GlobalAvgPool3dOp op2;
  CHECK(op2.forward(onehot).value_at(0) == doctest::Approx(0.125));

  Tensor dy = Tensor::full({1, 1}, 1.0, Dtype::kF64);
  Tensor dx = op2.backward(dy);
  for (std::int64_t i = 0; i < dx.size(); ++i) {
    CHECK(dx.value_at(i) == doctest::Approx(0.125));
  }
}

TEST_CASE("dense passthrough and bias rows") {
  Tensor eye = Tensor::zeros({4, 4}, Dtype::kF64);
  for (int i = 0; i < 4; ++i) eye.set_value(i * 4 + i, 1.0);
  Tensor x = random_tensor({3, 4}, Dtype::kF64, 71);
  DenseOp op;
  Tensor y = op.forward(x, eye, Tensor::zeros({4}, Dtype::kF64));
  CHECK(bitwise_equal(y, x));

  Tensor b = random_tensor({5}, Dtype::kF64, 72);
  DenseOp op2;
  Tensor rows = op2.forward(Tensor::zeros({2, 3}, Dtype::kF64),
                            Tensor::zeros({3, 5}, Dtype::kF64), b);
  for (std::int64_t i = 0; i < 2; ++i) {
    for (std::int64_t j = 0; j < 5; ++j) {
      CHECK(rows.value_at(i * 5 + j) == b.value_at(j));
    }
  }
}

TEST_CASE("dropout identity modes") {
  Tensor x = random_tensor({5, 5}, Dtype::kF64, 81);
  Rng rng(1);
  DropoutOp op;
  CHECK(bitwise_equal(op.forward(x, 0.0, Mode::kTrain, rng), x));
  DropoutOp op2;
  CHECK(bitwise_equal(op2.forward(x, 0.7, Mode::kEval, rng), x));
}

TEST_CASE("dropout statistics at rate 0.3 over 1e6 elements") {
  const std::int64_t count = 1000000;
  Tensor x = Tensor::full({count}, 1.0, Dtype::kF64);
  Rng rng(3141);
  DropoutOp op;
  Tensor y = op.forward(x, 0.3, Mode::kTrain, rng);
  std::int64_t survivors = 0;
  double sum = 0.0;
  auto ys = y.data<double>();
  for (std::int64_t i = 0; i < count; ++i) {
    if (ys[i] != 0.0) ++survivors;
    sum += ys[i];
  }
  const double survivor_fraction = static_cast<double>(survivors) / count;
  CHECK(std::abs(survivor_fraction - 0.7) <= 0.005);
  CHECK(std::abs(sum / count - 1.0) <= 0.01);  // inverted scaling keeps E[out] = E[in]
}

TEST_CASE("dropout masks are reproducible for a fixed seed and call sequence") {
  Tensor x = random_tensor({64, 64}, Dtype::kF32, 82);
  auto run = [&x] {
    Rng rng(999);
    DropoutOp op;
    Tensor a = op.forward(x, 0.4, Mode::kTrain, rng);
    DropoutOp op2;
    Tensor b = op2.forward(x, 0.4, Mode::kTrain, rng);
    return std::pair{a, b};
  };
  auto [a1, b1] = run();
  auto [a2, b2] = run();
  CHECK(bitwise_equal(a1, a2));
  CHECK(bitwise_equal(b1, b2));
  CHECK_FALSE(bitwise_equal(a1, b1));  // the stream advances between calls
}

TEST_CASE("softmax_xent on uniform logits over 40 classes") {
  Tensor logits = Tensor::zeros({3, 40}, Dtype::kF64);
  std::vector<std::int32_t> labels{0, 17, 39};
  SoftmaxXentOp op;
  SoftmaxXentResult res = op.forward(logits, labels);
  CHECK(res.loss == doctest::Approx(std::log(40.0)).epsilon(1e-12));
}

TEST_CASE("softmax_xent with a dominant true logit has near-zero loss") {
  Tensor logits = Tensor::zeros({1, 10}, Dtype::kF64);
  logits.set_value(4, 50.0);
  SoftmaxXentOp op;
  SoftmaxXentResult res = op.forward(logits, std::vector<std::int32_t>{4});
  CHECK(res.loss <= 1e-6);
}

TEST_CASE("softmax_xent rejects out-of-range labels naming the row") {
  Tensor logits = Tensor::zeros({2, 5}, Dtype::kF64);
  SoftmaxXentOp op;
  try {
    op.forward(logits, std::vector<std::int32_t>{1, 9});
    FAIL("expected label error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIndex);
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("softmax probability rows sum to one within 1e-12") {
  Tensor logits = random_tensor({16, 40}, Dtype::kF64, 91, -8.0, 8.0);
  Tensor probs = softmax_rows(logits);
  for (std::int64_t i = 0; i < 16; ++i) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < 40; ++j) sum += probs.value_at(i * 40 + j);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("backward without a fresh forward is a state error") {
  Tensor x = random_tensor({2, 2, 3, 3, 3}, Dtype::kF64, 92);
  ReluOp op;
  Tensor y = op.forward(x);
  Tensor dy = Tensor::full(y.shape(), 1.0, Dtype::kF64);
  CHECK_NOTHROW(op.backward(dy));
  try {
    op.backward(dy);
    FAIL("expected state error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kState);
  }
}
