#include "volres/network.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>

namespace volres {

std::vector<BlockSpec> NetworkSpec::blocks() const {
  const std::int64_t w1 = 8ll * k, w2 = 16ll * k;
  return {
      {BlockKind::kConvBlock3D, w1},     {BlockKind::kIdentityBlock3D, w1},
      {BlockKind::kIdentityBlock3D, w1}, {BlockKind::kConvBlock3D, w2},
      {BlockKind::kIdentityBlock3D, w2}, {BlockKind::kIdentityBlock3D, w2},
  };
}

std::string NetworkSpec::describe() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "volres-net|k=%d|classes=%d|dropout=%.17g|eps=%.17g|momentum=%.17g|"
                "input=%d|stem_pool=%d|dtype=%s",
                k, num_classes, dropout_rate, bn_eps, bn_momentum, input_dim,
                stem_pool ? 1 : 0, dtype_name(dtype));
  std::string s(buf);
  s += "|blocks=";
  for (const BlockSpec& b : blocks()) {
    s += b.kind == BlockKind::kConvBlock3D ? 'C' : 'I';
    s += std::to_string(b.width);
    s += ',';
  }
  return s;
}

std::uint64_t NetworkSpec::fingerprint() const {
  // FNV-1a over the canonical description.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : describe()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tensor Conv3dLayer::forward(const Tensor& x) {
  return op.forward(x, weight, bias, stride, pad);
}

Tensor Conv3dLayer::backward(const Tensor& dy) {
  Conv3dGrads g = op.backward(dy);
  dweight = std::move(g.dweight);
  dbias = std::move(g.dbias);
  return std::move(g.dx);
}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode) {
  return op.forward(x, state, mode);
}

Tensor BatchNormLayer::backward(const Tensor& dy) {
  BatchNormGrads g = op.backward(dy);
  dgamma = std::move(g.dgamma);
  dbeta = std::move(g.dbeta);
  return std::move(g.dx);
}

Tensor DenseLayer::forward(const Tensor& x) { return op.forward(x, weight, bias); }

Tensor DenseLayer::backward(const Tensor& dy) {
  DenseGrads g = op.backward(dy);
  dweight = std::move(g.dweight);
  dbias = std::move(g.dbias);
  return std::move(g.dx);
}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode, Rng* dropout_rng) {
  if (mode == Mode::kTrain && dropout_rate > 0.0 && dropout_rng == nullptr) {
    throw Error(ErrorKind::kConfig,
                "train-mode forward with dropout requires a seeded stream");
  }
  static Rng unused_rng(0);
  Rng& rng = dropout_rng ? *dropout_rng : unused_rng;

  Tensor a = relu1.forward(bn1.forward(x, mode));
  Tensor b = conv1.forward(a);
  Tensor c = dropout.forward(b, mode == Mode::kTrain ? dropout_rate : 0.0, mode, rng);
  Tensor d = relu2.forward(bn2.forward(c, mode));
  Tensor branch = conv2.forward(d);

  Tensor shortcut;
  if (kind == BlockKind::kConvBlock3D) {
    shortcut = proj_bn.forward(proj.forward(x), mode);
  } else {
    shortcut = x;
  }
  add_inplace(branch, shortcut);
  return relu_out.forward(branch);
}

Tensor ResidualBlock::backward(const Tensor& dy) {
  Tensor dsum = relu_out.backward(dy);

  Tensor d = conv2.backward(dsum);
  d = relu2.backward(d);
  d = bn2.backward(d);
  d = dropout.backward(d);
  d = conv1.backward(d);
  d = relu1.backward(d);
  Tensor dx = bn1.backward(d);

  if (kind == BlockKind::kConvBlock3D) {
    Tensor ds = proj_bn.backward(dsum);
    ds = proj.backward(ds);
    add_inplace(dx, ds);
  } else {
    add_inplace(dx, dsum);
  }
  return dx;
}

namespace {

Conv3dLayer make_conv(std::int64_t ci, std::int64_t co, int ksize, Dtype dt) {
  Conv3dLayer layer;
  layer.ksize = ksize;
  layer.stride = 1;
  layer.pad = ksize == 3 ? 1 : 0;  // same padding
  layer.weight = Tensor::zeros({co, ci, ksize, ksize, ksize}, dt);
  layer.bias = Tensor::zeros({co}, dt);
  layer.dweight = Tensor::zeros(layer.weight.shape(), dt);
  layer.dbias = Tensor::zeros({co}, dt);
  return layer;
}

BatchNormLayer make_bn(std::int64_t channels, const NetworkSpec& spec) {
  BatchNormLayer layer;
  layer.state = BNState::create(channels, spec.dtype, spec.bn_momentum, spec.bn_eps);
  layer.dgamma = Tensor::zeros({channels}, spec.dtype);
  layer.dbeta = Tensor::zeros({channels}, spec.dtype);
  return layer;
}

}  // namespace

Network build(const NetworkSpec& spec) {
  if (spec.k < 1) {
    throw Error(ErrorKind::kConfig,
                "widening factor k must be >= 1, got " + std::to_string(spec.k));
  }
  if (spec.num_classes < 2) {
    throw Error(ErrorKind::kConfig, "num_classes must be >= 2, got " +
                                        std::to_string(spec.num_classes));
  }
  if (spec.input_dim < 1) {
    throw Error(ErrorKind::kConfig, "input_dim must be >= 1");
  }

  Network net;
  net.spec_ = spec;
  net.stem_ = make_conv(1, spec.stem_width(), 3, spec.dtype);

  std::int64_t in_ch = spec.stem_width();
  for (const BlockSpec& bs : spec.blocks()) {
    if (bs.kind == BlockKind::kIdentityBlock3D && in_ch != bs.width) {
      throw Error(ErrorKind::kConfig, "IdentityBlock3D requires input channels == width");
    }
    ResidualBlock block;
    block.kind = bs.kind;
    block.in_channels = in_ch;
    block.width = bs.width;
    block.dropout_rate = spec.dropout_rate;
    block.bn1 = make_bn(in_ch, spec);
    block.conv1 = make_conv(in_ch, bs.width, 3, spec.dtype);
    block.bn2 = make_bn(bs.width, spec);
    block.conv2 = make_conv(bs.width, bs.width, 3, spec.dtype);
    if (bs.kind == BlockKind::kConvBlock3D) {
      block.proj = make_conv(in_ch, bs.width, 1, spec.dtype);
      block.proj_bn = make_bn(bs.width, spec);
    }
    net.blocks_.push_back(std::move(block));
    in_ch = bs.width;
  }

  DenseLayer head;
  head.weight = Tensor::zeros({in_ch, spec.num_classes}, spec.dtype);
  head.bias = Tensor::zeros({spec.num_classes}, spec.dtype);
  head.dweight = Tensor::zeros(head.weight.shape(), spec.dtype);
  head.dbias = Tensor::zeros({spec.num_classes}, spec.dtype);
  net.head_ = std::move(head);
  return net;
}

Tensor Network::forward(const Tensor& x, Mode mode, Rng* dropout_rng) {
  const Shape5 s = x.shape5();
  if (s.c != 1 || s.d != spec_.input_dim || s.h != spec_.input_dim ||
      s.w != spec_.input_dim) {
    throw Error(ErrorKind::kDimension,
                "network expects (n, 1, " + std::to_string(spec_.input_dim) + "^3), got " +
                    x.shape_str());
  }
  if (x.dtype() != spec_.dtype) {
    throw Error(ErrorKind::kDtype, std::string("network is ") + dtype_name(spec_.dtype) +
                                       ", input is " + dtype_name(x.dtype()));
  }
  Tensor t = stem_.forward(x);
  if (spec_.stem_pool) t = pool_.forward(t, 4, 4, /*ceil_pad=*/true);
  for (ResidualBlock& block : blocks_) t = block.forward(t, mode, dropout_rng);
  t = avgpool_.forward(t);
  return head_.forward(t);
}

Tensor Network::backward(const Tensor& dlogits) {
  Tensor d = head_.backward(dlogits);
  d = avgpool_.backward(d);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    d = it->backward(d);
  }
  if (spec_.stem_pool) d = pool_.backward(d);
  return stem_.backward(d);
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> refs;
  auto conv = [&refs](const std::string& prefix, Conv3dLayer& l) {
    refs.push_back({prefix + ".weight", &l.weight, &l.dweight, true});
    refs.push_back({prefix + ".bias", &l.bias, &l.dbias, true});
  };
  auto bn = [&refs](const std::string& prefix, BatchNormLayer& l) {
    refs.push_back({prefix + ".gamma", &l.state.gamma, &l.dgamma, true});
    refs.push_back({prefix + ".beta", &l.state.beta, &l.dbeta, true});
    refs.push_back({prefix + ".running_mean", &l.state.running_mean, nullptr, false});
    refs.push_back({prefix + ".running_var", &l.state.running_var, nullptr, false});
  };
  conv("stem", stem_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    ResidualBlock& b = blocks_[i];
    const std::string p = "block" + std::to_string(i);
    bn(p + ".bn1", b.bn1);
    conv(p + ".conv1", b.conv1);
    bn(p + ".bn2", b.bn2);
    conv(p + ".conv2", b.conv2);
    if (b.kind == BlockKind::kConvBlock3D) {
      conv(p + ".proj", b.proj);
      bn(p + ".proj_bn", b.proj_bn);
    }
  }
  refs.push_back({"head.weight", &head_.weight, &head_.dweight, true});
  refs.push_back({"head.bias", &head_.bias, &head_.dbias, true});
  return refs;
}

void Network::zero_grads() {
  for (ParamRef& p : parameters()) {
    if (!p.grad) continue;
    *p.grad = Tensor::zeros(p.value->shape(), p.value->dtype());
  }
}

ParamCounts count_parameters(Network& net) {
  ParamCounts counts;
  for (const ParamRef& p : net.parameters()) {
    if (p.trainable) counts.trainable += p.value->size();
    counts.with_running_stats += p.value->size();
  }
  return counts;
}

void init_weights(Network& net, Rng& rng) {
  for (ParamRef& p : net.parameters()) {
    Tensor& t = *p.value;
    // The classifier head starts at zero so the initial logits are exactly
    // uniform (loss ln(num_classes)); hidden convolutions use the 2/fan_in
    // normal.
    const bool is_conv_weight = p.name.ends_with(".weight") && t.rank() == 5;
    const bool is_gamma = p.name.ends_with(".gamma");
    const bool is_running_var = p.name.ends_with(".running_var");
    if (is_conv_weight) {
      const std::int64_t fan_in = t.dim(1) * t.dim(2) * t.dim(3) * t.dim(4);
      fill_normal(t, rng, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    } else if (is_gamma || is_running_var) {
      t = Tensor::full(t.shape(), 1.0, t.dtype());
    } else {
      t = Tensor::zeros(t.shape(), t.dtype());
    }
  }
  net.set_step(0);
}

}  // namespace volres
