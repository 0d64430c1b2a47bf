#include "volres/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>

#include "volres/parallel.hpp"
#include "volres/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "serialized formats assume a little-endian host");

namespace volres {

const char* dtype_name(Dtype dt) { return dt == Dtype::kF32 ? "f32" : "f64"; }

std::size_t dtype_size(Dtype dt) { return dt == Dtype::kF32 ? 4 : 8; }

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kDtype: return "dtype error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kIndex: return "index error";
    case ErrorKind::kGeometry: return "geometry error";
    case ErrorKind::kSpec: return "spec error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kDivergence: return "divergence error";
    case ErrorKind::kState: return "state error";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

std::string shape_to_string(std::span<const std::int64_t> shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

std::vector<std::int64_t> row_major_strides(const std::vector<std::int64_t>& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * shape[i + 1];
  }
  return strides;
}

std::int64_t checked_count(const std::vector<std::int64_t>& shape) {
  if (shape.empty() || shape.size() > 5) {
    throw Error(ErrorKind::kDimension,
                "tensor rank must be 1-5, got " + std::to_string(shape.size()));
  }
  std::int64_t count = 1;
  for (std::int64_t e : shape) {
    if (e < 1) {
      throw Error(ErrorKind::kDimension, "non-positive extent in shape " +
                                             shape_to_string(shape));
    }
    count *= e;
  }
  return count;
}

}  // namespace

template <class T>
void Tensor::check_access() const {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if (!buf_) throw Error(ErrorKind::kState, "access to an undefined tensor");
  const Dtype want = std::is_same_v<T, float> ? Dtype::kF32 : Dtype::kF64;
  if (want != dtype_) {
    throw Error(ErrorKind::kDtype, std::string("tensor is ") + dtype_name(dtype_) +
                                       ", accessed as " + dtype_name(want));
  }
}
template void Tensor::check_access<float>() const;
template void Tensor::check_access<double>() const;

Tensor Tensor::zeros(std::vector<std::int64_t> shape, Dtype dt) {
  Tensor t;
  t.size_ = checked_count(shape);
  t.shape_ = std::move(shape);
  t.strides_ = row_major_strides(t.shape_);
  t.dtype_ = dt;
  t.buf_ = std::make_shared<std::vector<std::byte>>(
      static_cast<std::size_t>(t.size_) * dtype_size(dt), std::byte{0});
  return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value, Dtype dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (dt == Dtype::kF32) {
    std::ranges::fill(t.data<float>(), static_cast<float>(value));
  } else {
    std::ranges::fill(t.data<double>(), value);
  }
  return t;
}

Tensor Tensor::from_f32(std::vector<std::int64_t> shape, std::vector<float> values) {
  Tensor t = zeros(std::move(shape), Dtype::kF32);
  if (static_cast<std::int64_t>(values.size()) != t.size_) {
    throw Error(ErrorKind::kDimension,
                "value count " + std::to_string(values.size()) +
                    " does not fill shape " + t.shape_str());
  }
  std::memcpy(t.buf_->data(), values.data(), values.size() * sizeof(float));
  return t;
}

Tensor Tensor::from_f64(std::vector<std::int64_t> shape, std::vector<double> values) {
  Tensor t = zeros(std::move(shape), Dtype::kF64);
  if (static_cast<std::int64_t>(values.size()) != t.size_) {
    throw Error(ErrorKind::kDimension,
                "value count " + std::to_string(values.size()) +
                    " does not fill shape " + t.shape_str());
  }
  std::memcpy(t.buf_->data(), values.data(), values.size() * sizeof(double));
  return t;
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw Error(ErrorKind::kDimension, "axis " + std::to_string(axis) +
                                           " out of range for rank " +
                                           std::to_string(rank()));
  }
  return shape_[axis];
}

Shape5 Tensor::shape5() const {
  if (rank() != 5) {
    throw Error(ErrorKind::kDimension,
                "expected a rank-5 activation, got shape " + shape_str());
  }
  return Shape5{shape_[0], shape_[1], shape_[2], shape_[3], shape_[4]};
}

double Tensor::value_at(std::int64_t flat_index) const {
  if (flat_index < 0 || flat_index >= size_) {
    throw Error(ErrorKind::kIndex, "flat index " + std::to_string(flat_index) +
                                       " out of range " + std::to_string(size_));
  }
  return dtype_ == Dtype::kF32 ? static_cast<double>(data<float>()[flat_index])
                               : data<double>()[flat_index];
}

void Tensor::set_value(std::int64_t flat_index, double v) {
  if (flat_index < 0 || flat_index >= size_) {
    throw Error(ErrorKind::kIndex, "flat index " + std::to_string(flat_index) +
                                       " out of range " + std::to_string(size_));
  }
  if (dtype_ == Dtype::kF32) {
    data<float>()[flat_index] = static_cast<float>(v);
  } else {
    data<double>()[flat_index] = v;
  }
}

Tensor Tensor::clone() const {
  Tensor t = *this;
  if (buf_) t.buf_ = std::make_shared<std::vector<std::byte>>(*buf_);
  return t;
}

Tensor Tensor::astype(Dtype dt) const {
  if (dt == dtype_) return clone();
  Tensor t = zeros(shape_, dt);
  if (dt == Dtype::kF64) {
    auto src = data<float>();
    auto dst = t.data<double>();
    for (std::int64_t i = 0; i < size_; ++i) dst[i] = static_cast<double>(src[i]);
  } else {
    auto src = data<double>();
    auto dst = t.data<float>();
    for (std::int64_t i = 0; i < size_; ++i) dst[i] = static_cast<float>(src[i]);
  }
  return t;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  const std::int64_t count = checked_count(shape);
  if (count != size_) {
    throw Error(ErrorKind::kDimension, "cannot reshape " + shape_str() + " to " +
                                           shape_to_string(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  t.strides_ = row_major_strides(t.shape_);
  return t;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

namespace {

void check_matmul_dtypes(const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype()) {
    throw Error(ErrorKind::kDtype, std::string("matmul operands mix ") +
                                       dtype_name(a.dtype()) + " and " +
                                       dtype_name(b.dtype()));
  }
  if (a.rank() != 2 || b.rank() != 2) {
    throw Error(ErrorKind::kDimension, "matmul requires rank-2 operands, got " +
                                           a.shape_str() + " and " + b.shape_str());
  }
}

// Loop order i-p-j: for each (i, j) the additions into c[i,j] happen in
// ascending p, identical to the naive triple loop, while the innermost j loop
// streams rows of b and vectorizes.
template <class T>
void matmul_nn_kernel(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k,
                      std::int64_t n) {
  parallel_for(m, 8, [=](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      for (std::int64_t p = 0; p < k; ++p) {
        const T aip = a[i * k + p];
        const T* brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  });
}

template <class T>
void matmul_tn_kernel(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k,
                      std::int64_t n) {
  // a is k x m, read transposed.
  parallel_for(m, 8, [=](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      for (std::int64_t p = 0; p < k; ++p) {
        const T aip = a[p * m + i];
        const T* brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  });
}

template <class T>
void matmul_nt_kernel(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k,
                      std::int64_t n) {
  // b is n x k, read transposed; dot products keep p ascending.
  parallel_for(m, 8, [=](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = 0;
        for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] = acc;
      }
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matmul_dtypes(a, b);
  const std::int64_t m = a.dim(0), k = a.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorKind::kDimension,
                "matmul inner extents differ: " + a.shape_str() + " x " + b.shape_str());
  }
  const std::int64_t n = b.dim(1);
  Tensor c = Tensor::zeros({m, n}, a.dtype());
  if (a.dtype() == Dtype::kF32) {
    matmul_nn_kernel(a.data<float>().data(), b.data<float>().data(),
                     c.data<float>().data(), m, k, n);
  } else {
    matmul_nn_kernel(a.data<double>().data(), b.data<double>().data(),
                     c.data<double>().data(), m, k, n);
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check_matmul_dtypes(a, b);
  const std::int64_t k = a.dim(0), m = a.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorKind::kDimension,
                "matmul_tn inner extents differ: " + a.shape_str() + " x " + b.shape_str());
  }
  const std::int64_t n = b.dim(1);
  Tensor c = Tensor::zeros({m, n}, a.dtype());
  if (a.dtype() == Dtype::kF32) {
    matmul_tn_kernel(a.data<float>().data(), b.data<float>().data(),
                     c.data<float>().data(), m, k, n);
  } else {
    matmul_tn_kernel(a.data<double>().data(), b.data<double>().data(),
                     c.data<double>().data(), m, k, n);
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_matmul_dtypes(a, b);
  const std::int64_t m = a.dim(0), k = a.dim(1);
  if (b.dim(1) != k) {
    throw Error(ErrorKind::kDimension,
                "matmul_nt inner extents differ: " + a.shape_str() + " x " + b.shape_str());
  }
  const std::int64_t n = b.dim(0);
  Tensor c = Tensor::zeros({m, n}, a.dtype());
  if (a.dtype() == Dtype::kF32) {
    matmul_nt_kernel(a.data<float>().data(), b.data<float>().data(),
                     c.data<float>().data(), m, k, n);
  } else {
    matmul_nt_kernel(a.data<double>().data(), b.data<double>().data(),
                     c.data<double>().data(), m, k, n);
  }
  return c;
}

std::int64_t conv_out_extent(std::int64_t extent, int ksize, int stride, int pad) {
  return (extent + 2 * static_cast<std::int64_t>(pad) - ksize) / stride + 1;
}

namespace {

struct ColGeometry {
  Shape5 in;
  std::int64_t od, oh, ow;
  int ksize, stride, pad;
  std::int64_t rows() const { return in.n * od * oh * ow; }
  std::int64_t cols() const { return in.c * ksize * ksize * ksize; }
};

ColGeometry col_geometry(const Shape5& s, int ksize, int stride, int pad) {
  if (stride < 1) throw Error(ErrorKind::kConfig, "stride must be >= 1");
  if (pad < 0) throw Error(ErrorKind::kConfig, "pad must be >= 0");
  ColGeometry g;
  g.in = s;
  g.ksize = ksize;
  g.stride = stride;
  g.pad = pad;
  if (s.d + 2 * pad < ksize || s.h + 2 * pad < ksize || s.w + 2 * pad < ksize) {
    throw Error(ErrorKind::kDimension,
                "kernel " + std::to_string(ksize) + "^3 larger than padded input (" +
                    std::to_string(s.d) + ", " + std::to_string(s.h) + ", " +
                    std::to_string(s.w) + ") with pad " + std::to_string(pad));
  }
  g.od = conv_out_extent(s.d, ksize, stride, pad);
  g.oh = conv_out_extent(s.h, ksize, stride, pad);
  g.ow = conv_out_extent(s.w, ksize, stride, pad);
  return g;
}

template <class T>
void im2col_kernel(const T* x, T* out, const ColGeometry& g) {
  const std::int64_t spatial_rows = g.od * g.oh * g.ow;
  const std::int64_t cols = g.cols();
  const std::int64_t in_spatial = g.in.spatial();
  parallel_for(g.rows(), 256, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t r = r0; r < r1; ++r) {
      const std::int64_t b = r / spatial_rows;
      std::int64_t rem = r % spatial_rows;
      const std::int64_t oz = rem / (g.oh * g.ow);
      rem %= g.oh * g.ow;
      const std::int64_t oy = rem / g.ow;
      const std::int64_t ox = rem % g.ow;
      const std::int64_t z0 = oz * g.stride - g.pad;
      const std::int64_t y0 = oy * g.stride - g.pad;
      const std::int64_t x0 = ox * g.stride - g.pad;
      T* row = out + r * cols;
      const T* xb = x + b * g.in.c * in_spatial;
      std::int64_t col = 0;
      for (std::int64_t c = 0; c < g.in.c; ++c) {
        const T* xc = xb + c * in_spatial;
        for (int kd = 0; kd < g.ksize; ++kd) {
          const std::int64_t z = z0 + kd;
          for (int kh = 0; kh < g.ksize; ++kh) {
            const std::int64_t y = y0 + kh;
            for (int kw = 0; kw < g.ksize; ++kw, ++col) {
              const std::int64_t xx = x0 + kw;
              const bool inside = z >= 0 && z < g.in.d && y >= 0 && y < g.in.h &&
                                  xx >= 0 && xx < g.in.w;
              row[col] = inside ? xc[(z * g.in.h + y) * g.in.w + xx] : T(0);
            }
          }
        }
      }
    }
  });
}

template <class T>
void col2im_kernel(const T* cols, T* x, const ColGeometry& g) {
  const std::int64_t spatial_rows = g.od * g.oh * g.ow;
  const std::int64_t ncols = g.cols();
  const std::int64_t in_spatial = g.in.spatial();
  // Parallel over batch: samples own disjoint output slices, and row order
  // inside a sample is fixed, so accumulation matches the serial order.
  parallel_for(g.in.n, 1, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      T* xb = x + b * g.in.c * in_spatial;
      for (std::int64_t sr = 0; sr < spatial_rows; ++sr) {
        const std::int64_t r = b * spatial_rows + sr;
        std::int64_t rem = sr;
        const std::int64_t oz = rem / (g.oh * g.ow);
        rem %= g.oh * g.ow;
        const std::int64_t oy = rem / g.ow;
        const std::int64_t ox = rem % g.ow;
        const std::int64_t z0 = oz * g.stride - g.pad;
        const std::int64_t y0 = oy * g.stride - g.pad;
        const std::int64_t x0 = ox * g.stride - g.pad;
        const T* row = cols + r * ncols;
        std::int64_t col = 0;
        for (std::int64_t c = 0; c < g.in.c; ++c) {
          T* xc = xb + c * in_spatial;
          for (int kd = 0; kd < g.ksize; ++kd) {
            const std::int64_t z = z0 + kd;
            for (int kh = 0; kh < g.ksize; ++kh) {
              const std::int64_t y = y0 + kh;
              for (int kw = 0; kw < g.ksize; ++kw, ++col) {
                const std::int64_t xx = x0 + kw;
                if (z >= 0 && z < g.in.d && y >= 0 && y < g.in.h && xx >= 0 &&
                    xx < g.in.w) {
                  xc[(z * g.in.h + y) * g.in.w + xx] += row[col];
                }
              }
            }
          }
        }
      }
    }
  });
}

}  // namespace

Tensor im2col3d(const Tensor& x, int ksize, int stride, int pad) {
  const ColGeometry g = col_geometry(x.shape5(), ksize, stride, pad);
  Tensor out = Tensor::zeros({g.rows(), g.cols()}, x.dtype());
  if (x.dtype() == Dtype::kF32) {
    im2col_kernel(x.data<float>().data(), out.data<float>().data(), g);
  } else {
    im2col_kernel(x.data<double>().data(), out.data<double>().data(), g);
  }
  return out;
}

Tensor col2im3d(const Tensor& cols, const Shape5& input_shape, int ksize, int stride,
                int pad) {
  const ColGeometry g = col_geometry(input_shape, ksize, stride, pad);
  if (cols.rank() != 2 || cols.dim(0) != g.rows() || cols.dim(1) != g.cols()) {
    throw Error(ErrorKind::kDimension,
                "col2im3d expected " + shape_to_string(std::vector<std::int64_t>{
                                           g.rows(), g.cols()}) +
                    ", got " + cols.shape_str());
  }
  Tensor x = Tensor::zeros({input_shape.n, input_shape.c, input_shape.d,
                            input_shape.h, input_shape.w},
                           cols.dtype());
  if (cols.dtype() == Dtype::kF32) {
    col2im_kernel(cols.data<float>().data(), x.data<float>().data(), g);
  } else {
    col2im_kernel(cols.data<double>().data(), x.data<double>().data(), g);
  }
  return x;
}

namespace {

template <class T>
void moments_kernel(const T* x, T* mean, T* var, const Shape5& s) {
  const std::int64_t spatial = s.spatial();
  const std::int64_t reduce = s.n * spatial;
  for (std::int64_t c = 0; c < s.c; ++c) {
    T sum = 0;
    for (std::int64_t b = 0; b < s.n; ++b) {
      const T* xc = x + (b * s.c + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) sum += xc[i];
    }
    const T mu = sum / static_cast<T>(reduce);
    T sq = 0;
    for (std::int64_t b = 0; b < s.n; ++b) {
      const T* xc = x + (b * s.c + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) {
        const T d = xc[i] - mu;
        sq += d * d;
      }
    }
    mean[c] = mu;
    var[c] = sq / static_cast<T>(reduce);
  }
}

}  // namespace

ChannelMoments channel_moments(const Tensor& x) {
  const Shape5 s = x.shape5();
  ChannelMoments m;
  m.mean = Tensor::zeros({s.c}, x.dtype());
  m.var = Tensor::zeros({s.c}, x.dtype());
  if (x.dtype() == Dtype::kF32) {
    moments_kernel(x.data<float>().data(), m.mean.data<float>().data(),
                   m.var.data<float>().data(), s);
  } else {
    moments_kernel(x.data<double>().data(), m.mean.data<double>().data(),
                   m.var.data<double>().data(), s);
  }
  return m;
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) {
    throw Error(ErrorKind::kDimension, "transpose2d requires rank 2, got " + a.shape_str());
  }
  const std::int64_t m = a.dim(0), n = a.dim(1);
  Tensor t = Tensor::zeros({n, m}, a.dtype());
  auto run = [&](auto* dst, const auto* src) {
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  };
  if (a.dtype() == Dtype::kF32) {
    run(t.data<float>().data(), a.data<float>().data());
  } else {
    run(t.data<double>().data(), a.data<double>().data());
  }
  return t;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype()) {
    throw Error(ErrorKind::kDtype, std::string("add mixes ") + dtype_name(a.dtype()) +
                                       " and " + dtype_name(b.dtype()));
  }
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::kDimension,
                "add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  }
  if (a.dtype() == Dtype::kF32) {
    auto pa = a.data<float>();
    auto pb = b.data<float>();
    for (std::int64_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
  } else {
    auto pa = a.data<double>();
    auto pb = b.data<double>();
    for (std::int64_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a.clone();
  add_inplace(out, b);
  return out;
}

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.set_value(i, lo + (hi - lo) * rng.uniform());
  }
}

void fill_normal(Tensor& t, Rng& rng, double mean, double stddev) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.set_value(i, mean + stddev * rng.normal());
  }
}

}  // namespace volres
