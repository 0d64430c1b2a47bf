#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volres/ops.hpp"
#include "volres/rng.hpp"
#include "volres/tensor.hpp"

namespace volres {

enum class BlockKind { kConvBlock3D, kIdentityBlock3D };

struct BlockSpec {
  BlockKind kind;
  std::int64_t width;  // 8k or 16k
};

// The fixed architecture: a stem convolution at full resolution, a 4/4 ceil
// max pool down to 8^3, six residual blocks in two width groups, then global
// average pooling into a single dense classifier. k multiplies every width.
struct NetworkSpec {
  int k = 1;
  int num_classes = 40;
  double dropout_rate = 0.3;
  double bn_eps = 1e-5;
  double bn_momentum = 0.99;
  int input_dim = 30;     // input cube extent
  bool stem_pool = true;  // disabled only by the reduced gradient-check variant
  Dtype dtype = Dtype::kF32;

  std::int64_t stem_width() const { return 8ll * k; }
  std::vector<BlockSpec> blocks() const;
  std::uint64_t fingerprint() const;
  std::string describe() const;
};

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;  // nullptr for running statistics
  bool trainable;
};

struct Conv3dLayer {
  Tensor weight, bias;
  Tensor dweight, dbias;
  Conv3dOp op;
  int stride = 1, pad = 1, ksize = 3;

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
};

struct BatchNormLayer {
  BNState state;
  Tensor dgamma, dbeta;
  BatchNorm3dOp op;

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
};

struct DenseLayer {
  Tensor weight, bias;
  Tensor dweight, dbias;
  DenseOp op;

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
};

// Pre-activation residual block. The branch is bn-relu-conv-dropout-bn-relu-
// conv; the shortcut is the identity, or a 1x1x1 projection (plus bn) when
// the block changes channel count. The block activation is applied to the
// sum.
struct ResidualBlock {
  BlockKind kind = BlockKind::kIdentityBlock3D;
  std::int64_t in_channels = 0, width = 0;
  double dropout_rate = 0.0;

  BatchNormLayer bn1, bn2;
  Conv3dLayer conv1, conv2;
  Conv3dLayer proj;
  BatchNormLayer proj_bn;
  ReluOp relu1, relu2, relu_out;
  DropoutOp dropout;

  Tensor forward(const Tensor& x, Mode mode, Rng* dropout_rng);
  Tensor backward(const Tensor& dy);
};

class Network {
 public:
  Network() = default;

  // In train mode with a positive dropout rate a seeded stream must be
  // supplied; eval mode ignores it.
  Tensor forward(const Tensor& x, Mode mode, Rng* dropout_rng = nullptr);
  Tensor backward(const Tensor& dlogits);

  std::vector<ParamRef> parameters();
  void zero_grads();

  const NetworkSpec& spec() const { return spec_; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  friend Network build(const NetworkSpec& spec);

 private:
  NetworkSpec spec_;
  Conv3dLayer stem_;
  MaxPool3dOp pool_;
  std::vector<ResidualBlock> blocks_;
  GlobalAvgPool3dOp avgpool_;
  DenseLayer head_;
  std::int64_t step_ = 0;
};

Network build(const NetworkSpec& spec);

struct ParamCounts {
  std::int64_t trainable = 0;           // weights, biases, bn gamma/beta
  std::int64_t with_running_stats = 0;  // plus bn running mean/var
};

ParamCounts count_parameters(Network& net);

// He-normal conv/dense weights, zero biases, unit gamma; fully determined by
// the stream.
void init_weights(Network& net, Rng& rng);

}  // namespace volres
