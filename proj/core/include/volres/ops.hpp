#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "volres/rng.hpp"
#include "volres/tensor.hpp"

namespace volres {

enum class Mode { kTrain, kEval };

// Each op keeps its saved-for-backward context between one forward and one
// backward. backward consumes the context; calling it again without a fresh
// forward is a state error.
namespace detail {
class OpContextGuard {
 public:
  void arm() { armed_ = true; }
  void consume(const char* op_name);

 private:
  bool armed_ = false;
};
}  // namespace detail

struct Conv3dGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;
};

// Cross-correlation with zero padding, lowered to im2col + matmul. Kernels
// are cubic, 3 for regular convolutions and 1 for projection shortcuts.
class Conv3dOp {
 public:
  Tensor forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                 int stride, int pad);
  Conv3dGrads backward(const Tensor& dy);

 private:
  detail::OpContextGuard guard_;
  Tensor saved_x_;
  Tensor saved_weight_;
  Shape5 in_shape_{};
  int stride_ = 1, pad_ = 0, ksize_ = 3;
};

// Learned scale/shift plus running statistics for eval mode.
struct BNState {
  Tensor gamma;         // [c]
  Tensor beta;          // [c]
  Tensor running_mean;  // [c]
  Tensor running_var;   // [c]
  double momentum = 0.99;
  double eps = 1e-5;

  static BNState create(std::int64_t channels, Dtype dt, double momentum = 0.99,
                        double eps = 1e-5);
};

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};

class BatchNorm3dOp {
 public:
  // Train mode normalizes with batch moments and folds them into the running
  // statistics; eval mode uses the running statistics unchanged.
  Tensor forward(const Tensor& x, BNState& state, Mode mode);
  BatchNormGrads backward(const Tensor& dy);

 private:
  detail::OpContextGuard guard_;
  Tensor saved_xhat_;
  Tensor saved_inv_std_;  // [c]
  Tensor saved_gamma_;
  Mode saved_mode_ = Mode::kTrain;
};

class ReluOp {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);  // gradient is zero at x == 0

 private:
  detail::OpContextGuard guard_;
  Tensor saved_x_;
};

class MaxPool3dOp {
 public:
  // With ceil_pad the input is zero-padded on the high side so each output
  // extent is ceil(extent / stride); padding cells take part in the max but
  // never receive gradient.
  Tensor forward(const Tensor& x, int window, int stride, bool ceil_pad);
  Tensor backward(const Tensor& dy);

 private:
  detail::OpContextGuard guard_;
  std::vector<std::int64_t> saved_argmax_;  // flat input index, -1 for padding
  Shape5 in_shape_{};
  Dtype dtype_ = Dtype::kF32;
};

class GlobalAvgPool3dOp {
 public:
  Tensor forward(const Tensor& x);  // [n,c,d,h,w] -> [n,c]
  Tensor backward(const Tensor& dy);

 private:
  detail::OpContextGuard guard_;
  Shape5 in_shape_{};
};

struct DenseGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;
};

class DenseOp {
 public:
  Tensor forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
  DenseGrads backward(const Tensor& dy);

 private:
  detail::OpContextGuard guard_;
  Tensor saved_x_;
  Tensor saved_weight_;
};

// Inverted dropout: train mode zeroes with probability rate and scales
// survivors by 1/(1-rate); eval mode is the identity.
class DropoutOp {
 public:
  Tensor forward(const Tensor& x, double rate, Mode mode, Rng& rng);
  Tensor backward(const Tensor& dy);

 private:
  detail::OpContextGuard guard_;
  Tensor saved_mask_;  // per-element multiplier, empty when identity
};

struct SoftmaxXentResult {
  double loss = 0.0;               // mean over the batch of -log p[label]
  Tensor probs;                    // [n, classes]
};

class SoftmaxXentOp {
 public:
  SoftmaxXentResult forward(const Tensor& logits, std::span<const std::int32_t> labels);
  Tensor backward();  // (softmax - onehot) / n

 private:
  detail::OpContextGuard guard_;
  Tensor saved_probs_;
  std::vector<std::int32_t> saved_labels_;
};

// Row-wise softmax without a loss attached; used by ensemble prediction.
Tensor softmax_rows(const Tensor& logits);

}  // namespace volres
