#include "volres/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace volres {

namespace detail {

void OpContextGuard::consume(const char* op_name) {
  if (!armed_) {
    throw Error(ErrorKind::kState,
                std::string(op_name) + ": backward without a fresh forward");
  }
  armed_ = false;
}

}  // namespace detail

namespace {

void check_dtype_match(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dtype() != b.dtype()) {
    throw Error(ErrorKind::kDtype, std::string(what) + " mixes " +
                                       dtype_name(a.dtype()) + " and " +
                                       dtype_name(b.dtype()));
  }
}

}  // namespace

Tensor Conv3dOp::forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         int stride, int pad) {
  check_dtype_match(x, weight, "conv3d");
  check_dtype_match(x, bias, "conv3d");
  const Shape5 s = x.shape5();
  if (weight.rank() != 5) {
    throw Error(ErrorKind::kDimension,
                "conv3d weight must be rank 5, got " + weight.shape_str());
  }
  const std::int64_t co = weight.dim(0), ci = weight.dim(1);
  const std::int64_t kd = weight.dim(2), kh = weight.dim(3), kw = weight.dim(4);
  if (kd != kh || kh != kw || (kd != 3 && kd != 1)) {
    throw Error(ErrorKind::kDimension,
                "conv3d kernel must be 3x3x3 or 1x1x1, got " + weight.shape_str());
  }
  if (ci != s.c) {
    throw Error(ErrorKind::kDimension,
                "conv3d channel mismatch: input has " + std::to_string(s.c) +
                    " channels, weight expects " + std::to_string(ci));
  }
  if (bias.rank() != 1 || bias.dim(0) != co) {
    throw Error(ErrorKind::kDimension, "conv3d bias must be [" + std::to_string(co) +
                                           "], got " + bias.shape_str());
  }

  ksize_ = static_cast<int>(kd);
  stride_ = stride;
  pad_ = pad;
  in_shape_ = s;
  saved_x_ = x;
  saved_weight_ = weight;

  const Tensor cols = im2col3d(x, ksize_, stride, pad);
  // weight as [co, ci*k^3]; out rows follow im2col rows.
  const Tensor wmat = weight.reshaped({co, ci * kd * kh * kw});
  Tensor out = matmul_nt(cols, wmat);  // [rows, co]

  const std::int64_t od = conv_out_extent(s.d, ksize_, stride, pad);
  const std::int64_t oh = conv_out_extent(s.h, ksize_, stride, pad);
  const std::int64_t ow = conv_out_extent(s.w, ksize_, stride, pad);
  const std::int64_t rows = out.dim(0);

  auto add_bias = [&](auto out_span, auto bias_span) {
    for (std::int64_t r = 0; r < rows; ++r) {
      auto* row = out_span.data() + r * co;
      for (std::int64_t c = 0; c < co; ++c) row[c] += bias_span[c];
    }
  };
  if (out.dtype() == Dtype::kF32) {
    add_bias(out.data<float>(), bias.data<float>());
  } else {
    add_bias(out.data<double>(), bias.data<double>());
  }

  // [n, od*oh*ow, co] -> [n, co, od, oh, ow]
  Tensor y = Tensor::zeros({s.n, co, od, oh, ow}, x.dtype());
  const std::int64_t spatial = od * oh * ow;
  auto scatter = [&](auto dst, auto src) {
    for (std::int64_t b = 0; b < s.n; ++b) {
      for (std::int64_t p = 0; p < spatial; ++p) {
        const auto* row = src.data() + (b * spatial + p) * co;
        for (std::int64_t c = 0; c < co; ++c) {
          dst[(b * co + c) * spatial + p] = row[c];
        }
      }
    }
  };
  if (y.dtype() == Dtype::kF32) {
    scatter(y.data<float>().data(), out.data<float>());
  } else {
    scatter(y.data<double>().data(), out.data<double>());
  }
  guard_.arm();
  return y;
}

Conv3dGrads Conv3dOp::backward(const Tensor& dy) {
  guard_.consume("conv3d");
  const Shape5 s = in_shape_;
  const std::int64_t co = saved_weight_.dim(0), ci = saved_weight_.dim(1);
  const std::int64_t k3 = static_cast<std::int64_t>(ksize_) * ksize_ * ksize_;
  const Shape5 ys = dy.shape5();
  const std::int64_t spatial = ys.d * ys.h * ys.w;
  const std::int64_t rows = ys.n * spatial;

  // [n, co, od, oh, ow] -> [rows, co]
  Tensor dout = Tensor::zeros({rows, co}, dy.dtype());
  auto gather = [&](auto dst, auto src) {
    for (std::int64_t b = 0; b < ys.n; ++b) {
      for (std::int64_t p = 0; p < spatial; ++p) {
        auto* row = dst.data() + (b * spatial + p) * co;
        for (std::int64_t c = 0; c < co; ++c) {
          row[c] = src[(b * co + c) * spatial + p];
        }
      }
    }
  };
  if (dy.dtype() == Dtype::kF32) {
    gather(dout.data<float>(), dy.data<float>().data());
  } else {
    gather(dout.data<double>(), dy.data<double>().data());
  }

  const Tensor cols = im2col3d(saved_x_, ksize_, stride_, pad_);
  Tensor dwmat = matmul_tn(dout, cols);  // [co, ci*k^3]
  Tensor dweight = dwmat.reshaped({co, ci, ksize_, ksize_, ksize_});

  Tensor dbias = Tensor::zeros({co}, dy.dtype());
  auto reduce_bias = [&](auto db, auto src) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const auto* row = src.data() + r * co;
      for (std::int64_t c = 0; c < co; ++c) db[c] += row[c];
    }
  };
  if (dy.dtype() == Dtype::kF32) {
    reduce_bias(dbias.data<float>().data(), dout.data<float>());
  } else {
    reduce_bias(dbias.data<double>().data(), dout.data<double>());
  }

  const Tensor wmat = saved_weight_.reshaped({co, ci * k3});
  const Tensor dcols = matmul(dout, wmat);  // [rows, ci*k^3]
  Tensor dx = col2im3d(dcols, s, ksize_, stride_, pad_);
  return Conv3dGrads{std::move(dx), std::move(dweight), std::move(dbias)};
}

BNState BNState::create(std::int64_t channels, Dtype dt, double momentum, double eps) {
  BNState st;
  st.gamma = Tensor::full({channels}, 1.0, dt);
  st.beta = Tensor::zeros({channels}, dt);
  st.running_mean = Tensor::zeros({channels}, dt);
  st.running_var = Tensor::full({channels}, 1.0, dt);
  st.momentum = momentum;
  st.eps = eps;
  return st;
}

Tensor BatchNorm3dOp::forward(const Tensor& x, BNState& state, Mode mode) {
  const Shape5 s = x.shape5();
  check_dtype_match(x, state.gamma, "batchnorm3d");
  if (state.gamma.dim(0) != s.c) {
    throw Error(ErrorKind::kDimension,
                "batchnorm3d expects " + std::to_string(state.gamma.dim(0)) +
                    " channels, input has " + std::to_string(s.c));
  }
  const std::int64_t reduce = s.n * s.spatial();
  if (mode == Mode::kTrain && reduce < 2) {
    throw Error(ErrorKind::kData,
                "degenerate batch: batchnorm3d train mode needs n*d*h*w >= 2, got " +
                    std::to_string(reduce));
  }

  Tensor mean, var;
  if (mode == Mode::kTrain) {
    ChannelMoments m = channel_moments(x);
    mean = std::move(m.mean);
    var = std::move(m.var);
    // running <- momentum * running + (1 - momentum) * batch
    auto update = [&](Tensor& run, const Tensor& batch) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        run.set_value(c, state.momentum * run.value_at(c) +
                             (1.0 - state.momentum) * batch.value_at(c));
      }
    };
    update(state.running_mean, mean);
    update(state.running_var, var);
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Tensor y = Tensor::zeros(x.shape(), x.dtype());
  Tensor xhat = Tensor::zeros(x.shape(), x.dtype());
  Tensor inv_std = Tensor::zeros({s.c}, x.dtype());
  const std::int64_t spatial = s.spatial();

  auto run = [&](auto xs, auto ys, auto hs, auto is, auto ms, auto vs, auto gs, auto bs) {
    using T = std::remove_reference_t<decltype(xs[0])>;
    for (std::int64_t c = 0; c < s.c; ++c) {
      is[c] = T(1) / std::sqrt(vs[c] + static_cast<T>(state.eps));
    }
    for (std::int64_t b = 0; b < s.n; ++b) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        const T mu = ms[c], istd = is[c], g = gs[c], be = bs[c];
        const std::int64_t base = (b * s.c + c) * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) {
          const T h = (xs[base + i] - mu) * istd;
          hs[base + i] = h;
          ys[base + i] = g * h + be;
        }
      }
    }
  };
  if (x.dtype() == Dtype::kF32) {
    run(x.data<float>(), y.data<float>(), xhat.data<float>(),
        inv_std.data<float>(), mean.data<float>(), var.data<float>(),
        state.gamma.data<float>(), state.beta.data<float>());
  } else {
    run(x.data<double>(), y.data<double>(), xhat.data<double>(),
        inv_std.data<double>(), mean.data<double>(), var.data<double>(),
        state.gamma.data<double>(), state.beta.data<double>());
  }

  saved_xhat_ = std::move(xhat);
  saved_inv_std_ = std::move(inv_std);
  saved_gamma_ = state.gamma;
  saved_mode_ = mode;
  guard_.arm();
  return y;
}

BatchNormGrads BatchNorm3dOp::backward(const Tensor& dy) {
  guard_.consume("batchnorm3d");
  const Shape5 s = dy.shape5();
  const std::int64_t spatial = s.spatial();
  const std::int64_t reduce = s.n * spatial;

  Tensor dx = Tensor::zeros(dy.shape(), dy.dtype());
  Tensor dgamma = Tensor::zeros({s.c}, dy.dtype());
  Tensor dbeta = Tensor::zeros({s.c}, dy.dtype());

  auto run = [&](auto dys, auto hs, auto is, auto gs, auto dxs, auto dgs, auto dbs) {
    using T = std::remove_reference_t<decltype(dgs[0])>;
    for (std::int64_t c = 0; c < s.c; ++c) {
      T sum_dy = 0, sum_dyh = 0;
      for (std::int64_t b = 0; b < s.n; ++b) {
        const std::int64_t base = (b * s.c + c) * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) {
          sum_dy += dys[base + i];
          sum_dyh += dys[base + i] * hs[base + i];
        }
      }
      dgs[c] = sum_dyh;
      dbs[c] = sum_dy;
      const T g_istd = gs[c] * is[c];
      if (saved_mode_ == Mode::kTrain) {
        const T mean_dy = sum_dy / static_cast<T>(reduce);
        const T mean_dyh = sum_dyh / static_cast<T>(reduce);
        for (std::int64_t b = 0; b < s.n; ++b) {
          const std::int64_t base = (b * s.c + c) * spatial;
          for (std::int64_t i = 0; i < spatial; ++i) {
            dxs[base + i] =
                g_istd * (dys[base + i] - mean_dy - hs[base + i] * mean_dyh);
          }
        }
      } else {
        for (std::int64_t b = 0; b < s.n; ++b) {
          const std::int64_t base = (b * s.c + c) * spatial;
          for (std::int64_t i = 0; i < spatial; ++i) {
            dxs[base + i] = g_istd * dys[base + i];
          }
        }
      }
    }
  };
  if (dy.dtype() == Dtype::kF32) {
    run(dy.data<float>(), saved_xhat_.data<float>(), saved_inv_std_.data<float>(),
        saved_gamma_.data<float>(), dx.data<float>(), dgamma.data<float>(),
        dbeta.data<float>());
  } else {
    run(dy.data<double>(), saved_xhat_.data<double>(), saved_inv_std_.data<double>(),
        saved_gamma_.data<double>(), dx.data<double>(), dgamma.data<double>(),
        dbeta.data<double>());
  }
  return BatchNormGrads{std::move(dx), std::move(dgamma), std::move(dbeta)};
}

Tensor ReluOp::forward(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape(), x.dtype());
  if (x.dtype() == Dtype::kF32) {
    auto xs = x.data<float>();
    auto ys = y.data<float>();
    for (std::int64_t i = 0; i < x.size(); ++i) ys[i] = xs[i] > 0.f ? xs[i] : 0.f;
  } else {
    auto xs = x.data<double>();
    auto ys = y.data<double>();
    for (std::int64_t i = 0; i < x.size(); ++i) ys[i] = xs[i] > 0.0 ? xs[i] : 0.0;
  }
  saved_x_ = x;
  guard_.arm();
  return y;
}

Tensor ReluOp::backward(const Tensor& dy) {
  guard_.consume("relu");
  if (!dy.same_shape(saved_x_)) {
    throw Error(ErrorKind::kDimension, "relu backward shape mismatch: " +
                                           dy.shape_str() + " vs " + saved_x_.shape_str());
  }
  Tensor dx = Tensor::zeros(dy.shape(), dy.dtype());
  if (dy.dtype() == Dtype::kF32) {
    auto xs = saved_x_.data<float>();
    auto dys = dy.data<float>();
    auto dxs = dx.data<float>();
    for (std::int64_t i = 0; i < dy.size(); ++i) dxs[i] = xs[i] > 0.f ? dys[i] : 0.f;
  } else {
    auto xs = saved_x_.data<double>();
    auto dys = dy.data<double>();
    auto dxs = dx.data<double>();
    for (std::int64_t i = 0; i < dy.size(); ++i) dxs[i] = xs[i] > 0.0 ? dys[i] : 0.0;
  }
  return dx;
}

namespace {

std::int64_t pool_out_extent(std::int64_t extent, int window, int stride, bool ceil_pad) {
  if (ceil_pad) return (extent + stride - 1) / stride;
  return (extent - window) / stride + 1;
}

}  // namespace

Tensor MaxPool3dOp::forward(const Tensor& x, int window, int stride, bool ceil_pad) {
  if (window < 1) throw Error(ErrorKind::kConfig, "maxpool window must be >= 1");
  if (stride < 1) throw Error(ErrorKind::kConfig, "maxpool stride must be >= 1");
  const Shape5 s = x.shape5();
  if (!ceil_pad && (s.d < window || s.h < window || s.w < window)) {
    throw Error(ErrorKind::kDimension, "maxpool window exceeds input " + x.shape_str());
  }
  const std::int64_t od = pool_out_extent(s.d, window, stride, ceil_pad);
  const std::int64_t oh = pool_out_extent(s.h, window, stride, ceil_pad);
  const std::int64_t ow = pool_out_extent(s.w, window, stride, ceil_pad);

  Tensor y = Tensor::zeros({s.n, s.c, od, oh, ow}, x.dtype());
  saved_argmax_.assign(static_cast<std::size_t>(y.size()), -1);
  in_shape_ = s;
  dtype_ = x.dtype();

  auto run = [&](auto xs, auto ys) {
    using T = std::remove_reference_t<decltype(ys[0])>;
    const std::int64_t spatial = s.spatial();
    std::int64_t out_idx = 0;
    for (std::int64_t b = 0; b < s.n; ++b) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        const std::int64_t base = (b * s.c + c) * spatial;
        for (std::int64_t oz = 0; oz < od; ++oz) {
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            for (std::int64_t ox = 0; ox < ow; ++ox, ++out_idx) {
              T best = std::numeric_limits<T>::lowest();
              std::int64_t best_idx = -1;
              // Ascending scan; strict > keeps the lowest linear index on ties.
              for (int kd = 0; kd < window; ++kd) {
                const std::int64_t z = oz * stride + kd;
                for (int kh = 0; kh < window; ++kh) {
                  const std::int64_t yy = oy * stride + kh;
                  for (int kw = 0; kw < window; ++kw) {
                    const std::int64_t xx = ox * stride + kw;
                    const bool inside = z < s.d && yy < s.h && xx < s.w;
                    const T v = inside
                                    ? xs[base + (z * s.h + yy) * s.w + xx]
                                    : T(0);  // high-side zero padding
                    if (v > best) {
                      best = v;
                      best_idx = inside ? base + (z * s.h + yy) * s.w + xx : -1;
                    }
                  }
                }
              }
              ys[out_idx] = best;
              saved_argmax_[static_cast<std::size_t>(out_idx)] = best_idx;
            }
          }
        }
      }
    }
  };
  if (x.dtype() == Dtype::kF32) {
    run(x.data<float>(), y.data<float>());
  } else {
    run(x.data<double>(), y.data<double>());
  }
  guard_.arm();
  return y;
}

Tensor MaxPool3dOp::backward(const Tensor& dy) {
  guard_.consume("maxpool3d");
  if (dy.size() != static_cast<std::int64_t>(saved_argmax_.size())) {
    throw Error(ErrorKind::kDimension, "maxpool3d backward size mismatch");
  }
  Tensor dx = Tensor::zeros({in_shape_.n, in_shape_.c, in_shape_.d, in_shape_.h,
                             in_shape_.w},
                            dtype_);
  auto run = [&](auto dys, auto dxs) {
    for (std::int64_t i = 0; i < dy.size(); ++i) {
      const std::int64_t idx = saved_argmax_[static_cast<std::size_t>(i)];
      if (idx >= 0) dxs[idx] += dys[i];
    }
  };
  if (dtype_ == Dtype::kF32) {
    run(dy.data<float>(), dx.data<float>());
  } else {
    run(dy.data<double>(), dx.data<double>());
  }
  return dx;
}

Tensor GlobalAvgPool3dOp::forward(const Tensor& x) {
  const Shape5 s = x.shape5();
  in_shape_ = s;
  Tensor y = Tensor::zeros({s.n, s.c}, x.dtype());
  const std::int64_t spatial = s.spatial();
  auto run = [&](auto xs, auto ys) {
    using T = std::remove_reference_t<decltype(ys[0])>;
    for (std::int64_t b = 0; b < s.n; ++b) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        const std::int64_t base = (b * s.c + c) * spatial;
        T sum = 0;
        for (std::int64_t i = 0; i < spatial; ++i) sum += xs[base + i];
        ys[b * s.c + c] = sum / static_cast<T>(spatial);
      }
    }
  };
  if (x.dtype() == Dtype::kF32) {
    run(x.data<float>(), y.data<float>());
  } else {
    run(x.data<double>(), y.data<double>());
  }
  guard_.arm();
  return y;
}

Tensor GlobalAvgPool3dOp::backward(const Tensor& dy) {
  guard_.consume("avgpool3d_global");
  const Shape5 s = in_shape_;
  if (dy.rank() != 2 || dy.dim(0) != s.n || dy.dim(1) != s.c) {
    throw Error(ErrorKind::kDimension, "avgpool backward expects [n,c], got " + dy.shape_str());
  }
  Tensor dx = Tensor::zeros({s.n, s.c, s.d, s.h, s.w}, dy.dtype());
  const std::int64_t spatial = s.spatial();
  auto run = [&](auto dys, auto dxs) {
    using T = std::remove_reference_t<decltype(dxs[0])>;
    for (std::int64_t b = 0; b < s.n; ++b) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        const T g = dys[b * s.c + c] / static_cast<T>(spatial);
        const std::int64_t base = (b * s.c + c) * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) dxs[base + i] = g;
      }
    }
  };
  if (dy.dtype() == Dtype::kF32) {
    run(dy.data<float>(), dx.data<float>());
  } else {
    run(dy.data<double>(), dx.data<double>());
  }
  return dx;
}

Tensor DenseOp::forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_dtype_match(x, weight, "dense");
  check_dtype_match(x, bias, "dense");
  if (x.rank() != 2 || weight.rank() != 2) {
    throw Error(ErrorKind::kDimension, "dense expects rank-2 input and weight, got " +
                                           x.shape_str() + " and " + weight.shape_str());
  }
  if (x.dim(1) != weight.dim(0)) {
    throw Error(ErrorKind::kDimension,
                "dense feature mismatch: " + x.shape_str() + " x " + weight.shape_str());
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
    throw Error(ErrorKind::kDimension, "dense bias shape " + bias.shape_str() +
                                           " does not match weight " + weight.shape_str());
  }
  saved_x_ = x;
  saved_weight_ = weight;
  Tensor y = matmul(x, weight);
  const std::int64_t n = y.dim(0), classes = y.dim(1);
  auto run = [&](auto ys, auto bs) {
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < classes; ++j) ys[i * classes + j] += bs[j];
    }
  };
  if (y.dtype() == Dtype::kF32) {
    run(y.data<float>().data(), bias.data<float>());
  } else {
    run(y.data<double>().data(), bias.data<double>());
  }
  guard_.arm();
  return y;
}

DenseGrads DenseOp::backward(const Tensor& dy) {
  guard_.consume("dense");
  Tensor dweight = matmul_tn(saved_x_, dy);          // [f, classes]
  Tensor dx = matmul_nt(dy, saved_weight_);          // [n, f]
  const std::int64_t n = dy.dim(0), classes = dy.dim(1);
  Tensor dbias = Tensor::zeros({classes}, dy.dtype());
  auto run = [&](auto dys, auto dbs) {
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < classes; ++j) dbs[j] += dys[i * classes + j];
    }
  };
  if (dy.dtype() == Dtype::kF32) {
    run(dy.data<float>().data(), dbias.data<float>().data());
  } else {
    run(dy.data<double>().data(), dbias.data<double>().data());
  }
  return DenseGrads{std::move(dx), std::move(dweight), std::move(dbias)};
}

Tensor DropoutOp::forward(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw Error(ErrorKind::kConfig,
                "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0.0) {
    saved_mask_ = Tensor();
    guard_.arm();
    return x;
  }
  const double scale = 1.0 / (1.0 - rate);
  Tensor mask = Tensor::zeros(x.shape(), x.dtype());
  Tensor y = Tensor::zeros(x.shape(), x.dtype());
  auto run = [&](auto xs, auto ms, auto ys) {
    using T = std::remove_reference_t<decltype(ys[0])>;
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const T m = rng.uniform() < rate ? T(0) : static_cast<T>(scale);
      ms[i] = m;
      ys[i] = xs[i] * m;
    }
  };
  if (x.dtype() == Dtype::kF32) {
    run(x.data<float>(), mask.data<float>(), y.data<float>());
  } else {
    run(x.data<double>(), mask.data<double>(), y.data<double>());
  }
  saved_mask_ = std::move(mask);
  guard_.arm();
  return y;
}

Tensor DropoutOp::backward(const Tensor& dy) {
  guard_.consume("dropout");
  if (!saved_mask_.defined()) return dy;
  if (!dy.same_shape(saved_mask_)) {
    throw Error(ErrorKind::kDimension, "dropout backward shape mismatch");
  }
  Tensor dx = Tensor::zeros(dy.shape(), dy.dtype());
  auto run = [&](auto dys, auto ms, auto dxs) {
    for (std::int64_t i = 0; i < dy.size(); ++i) dxs[i] = dys[i] * ms[i];
  };
  if (dy.dtype() == Dtype::kF32) {
    run(dy.data<float>(), saved_mask_.data<float>(), dx.data<float>());
  } else {
    run(dy.data<double>(), saved_mask_.data<double>(), dx.data<double>());
  }
  return dx;
}

SoftmaxXentResult SoftmaxXentOp::forward(const Tensor& logits,
                                         std::span<const std::int32_t> labels) {
  if (logits.rank() != 2) {
    throw Error(ErrorKind::kDimension, "softmax_xent expects [n, classes], got " +
                                           logits.shape_str());
  }
  const std::int64_t n = logits.dim(0), classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw Error(ErrorKind::kDimension,
                "softmax_xent got " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n) + " rows");
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw Error(ErrorKind::kIndex, "label " + std::to_string(labels[i]) +
                                         " out of range [0, " + std::to_string(classes) +
                                         ") in row " + std::to_string(i));
    }
  }
  Tensor probs = Tensor::zeros(logits.shape(), logits.dtype());
  double loss = 0.0;
  auto run = [&](auto ls, auto ps) {
    using T = std::remove_reference_t<decltype(ps[0])>;
    for (std::int64_t i = 0; i < n; ++i) {
      const auto* row = ls.data() + i * classes;
      auto* prow = ps.data() + i * classes;
      T mx = row[0];
      for (std::int64_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
      T denom = 0;
      for (std::int64_t j = 0; j < classes; ++j) {
        prow[j] = std::exp(row[j] - mx);
        denom += prow[j];
      }
      for (std::int64_t j = 0; j < classes; ++j) prow[j] /= denom;
      // -log p = log(denom) - (logit - max), stable for extreme logits
      loss += static_cast<double>(std::log(denom) - (row[labels[i]] - mx));
    }
  };
  if (logits.dtype() == Dtype::kF32) {
    run(logits.data<float>(), probs.data<float>());
  } else {
    run(logits.data<double>(), probs.data<double>());
  }
  loss /= static_cast<double>(n);
  saved_probs_ = probs;
  saved_labels_.assign(labels.begin(), labels.end());
  guard_.arm();
  return SoftmaxXentResult{loss, std::move(probs)};
}

Tensor SoftmaxXentOp::backward() {
  guard_.consume("softmax_xent");
  const std::int64_t n = saved_probs_.dim(0), classes = saved_probs_.dim(1);
  Tensor d = saved_probs_.clone();
  auto run = [&](auto ds) {
    using T = std::remove_reference_t<decltype(ds[0])>;
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      ds[i * classes + saved_labels_[static_cast<std::size_t>(i)]] -= T(1);
      for (std::int64_t j = 0; j < classes; ++j) ds[i * classes + j] *= inv_n;
    }
  };
  if (d.dtype() == Dtype::kF32) {
    run(d.data<float>());
  } else {
    run(d.data<double>());
  }
  return d;
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw Error(ErrorKind::kDimension, "softmax expects [n, classes], got " +
                                           logits.shape_str());
  }
  const std::int64_t n = logits.dim(0), classes = logits.dim(1);
  Tensor probs = Tensor::zeros(logits.shape(), logits.dtype());
  auto run = [&](auto ls, auto ps) {
    using T = std::remove_reference_t<decltype(ps[0])>;
    for (std::int64_t i = 0; i < n; ++i) {
      const auto* row = ls.data() + i * classes;
      auto* prow = ps.data() + i * classes;
      T mx = row[0];
      for (std::int64_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
      T denom = 0;
      for (std::int64_t j = 0; j < classes; ++j) {
        prow[j] = std::exp(row[j] - mx);
        denom += prow[j];
      }
      for (std::int64_t j = 0; j < classes; ++j) prow[j] /= denom;
    }
  };
  if (logits.dtype() == Dtype::kF32) {
    run(logits.data<float>(), probs.data<float>());
  } else {
    run(logits.data<double>(), probs.data<double>());
  }
  return probs;
}

}  // namespace volres
