#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "volres/error.hpp"

namespace volres {

enum class Dtype : std::uint8_t { kF32 = 0, kF64 = 1 };

const char* dtype_name(Dtype dt);
std::size_t dtype_size(Dtype dt);

// Canonical activation layout (n, c, d, h, w); all extents >= 1.
struct Shape5 {
  std::int64_t n = 1, c = 1, d = 1, h = 1, w = 1;

  std::int64_t spatial() const { return d * h * w; }
  std::int64_t total() const { return n * c * d * h * w; }
  bool operator==(const Shape5&) const = default;
};

// Dense row-major N-d array, rank 1-5, f32 or f64. The buffer is shared
// between copies; producers write once and consumers treat values as
// immutable, so copies are cheap handles.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::int64_t> shape, Dtype dt);
  static Tensor full(std::vector<std::int64_t> shape, double value, Dtype dt);
  static Tensor from_f32(std::vector<std::int64_t> shape, std::vector<float> values);
  static Tensor from_f64(std::vector<std::int64_t> shape, std::vector<double> values);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  const std::vector<std::int64_t>& strides() const { return strides_; }
  Dtype dtype() const { return dtype_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return size_; }
  bool defined() const { return buf_ != nullptr; }
  std::int64_t dim(int axis) const;

  Shape5 shape5() const;  // requires rank 5

  template <class T>
  std::span<T> data() {
    check_access<T>();
    return {reinterpret_cast<T*>(buf_->data()), static_cast<std::size_t>(size_)};
  }
  template <class T>
  std::span<const T> data() const {
    check_access<T>();
    return {reinterpret_cast<const T*>(buf_->data()), static_cast<std::size_t>(size_)};
  }

  // Scalar access through doubles; slow, intended for tests and small code.
  double value_at(std::int64_t flat_index) const;
  void set_value(std::int64_t flat_index, double v);

  Tensor clone() const;
  Tensor astype(Dtype dt) const;  // explicit conversion; same dtype clones
  // Same buffer under a new shape; element count must match.
  Tensor reshaped(std::vector<std::int64_t> shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

 private:
  template <class T>
  void check_access() const;

  std::vector<std::int64_t> shape_;
  std::vector<std::int64_t> strides_;
  std::int64_t size_ = 0;
  Dtype dtype_ = Dtype::kF32;
  std::shared_ptr<std::vector<std::byte>> buf_;
};

std::string shape_to_string(std::span<const std::int64_t> shape);

// c[i,j] = sum_p a[i,p] * b[p,j]; accumulation in the common dtype, p
// ascending for every output element regardless of threading.
Tensor matmul(const Tensor& a, const Tensor& b);
// a is consumed transposed: c[i,j] = sum_p a[p,i] * b[p,j].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// b is consumed transposed: c[i,j] = sum_p a[i,p] * b[j,p].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Patch lowering for 3d convolution with a cubic kernel. One row per
// (batch, output voxel), one column per (channel, kd, kh, kw); out-of-bounds
// reads are zeros. Output extent per axis: floor((e + 2*pad - k)/stride) + 1.
Tensor im2col3d(const Tensor& x, int ksize, int stride, int pad);

// Adjoint of im2col3d: scatters column gradients back onto the input grid.
// Accumulation order is row-ascending within each batch sample.
Tensor col2im3d(const Tensor& cols, const Shape5& input_shape, int ksize, int stride, int pad);

std::int64_t conv_out_extent(std::int64_t extent, int ksize, int stride, int pad);

struct ChannelMoments {
  Tensor mean;  // [c]
  Tensor var;   // [c], biased (divide by n*d*h*w)
};

// Per-channel mean and biased variance over all non-channel axes, two-pass,
// fixed accumulation order.
ChannelMoments channel_moments(const Tensor& x);

// Plumbing shared by layers; all elementwise, dtype-checked.
Tensor transpose2d(const Tensor& a);
void add_inplace(Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
void fill_uniform(Tensor& t, class Rng& rng, double lo, double hi);
void fill_normal(Tensor& t, class Rng& rng, double mean, double stddev);

}  // namespace volres
