#include "diunet/conv.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace diunet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_positive(int value, const char* what) {
  if (value < 1) {
    throw std::invalid_argument(std::string(what) + " must be positive, got " +
                                std::to_string(value));
  }
}

template <typename T>
ImageDims check_conv_shapes(const Tensor<T>& input, const Tensor<T>& weights,
                            const Tensor<T>& bias, const DilatedConvSpec& spec) {
  spec.validate();
  const ImageDims d = image_dims(input.shape());
  if (weights.shape() != spec.weight_shape()) {
    throw DimensionError("conv weights have shape " + shape_string(weights.shape()) +
                         ", expected " + shape_string(spec.weight_shape()));
  }
  if (d.channels != static_cast<std::size_t>(spec.in_channels)) {
    throw DimensionError("conv input has " + std::to_string(d.channels) +
                         " channels but the layer expects " +
                         std::to_string(spec.in_channels));
  }
  if (bias.shape() != Shape{static_cast<std::size_t>(spec.out_channels)}) {
    throw DimensionError("conv bias has shape " + shape_string(bias.shape()) +
                         ", expected (" + std::to_string(spec.out_channels) + ")");
  }
  return d;
}

// Per-thread workspace that only ever grows. Patch matrices are rewritten in
// full on every use, so recycling them skips both the zero-fill and the page
// faults of a fresh allocation.
template <typename T>
T* scratch(int slot, std::size_t n) {
  thread_local AlignedVector<T> buffers[2];
  auto& buf = buffers[slot];
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

// Patch matrix: one row per output pixel, columns ordered (ky, kx, cin) to
// match the row-major weight layout.
template <typename T>
const T* im2col(const T* in, const ImageDims& d, const DilatedConvSpec& spec) {
  const int k = spec.kernel_size;
  const int l = spec.dilation;
  const int pad = spec.pad();
  const std::size_t cin = d.channels;
  const std::size_t cols = static_cast<std::size_t>(k * k) * cin;
  T* out = scratch<T>(0, d.pixels() * cols);
  const auto H = static_cast<long>(d.height);
  const auto W = static_cast<long>(d.width);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (long y = 0; y < H; ++y) {
      for (int ky = 0; ky < k; ++ky) {
        const long iy = y + ky * l - pad;
        const bool row_inside = iy >= 0 && iy < H;
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t col = static_cast<std::size_t>(ky * k + kx) * cin;
          const long shift = kx * l - pad;
          T* dst = out + (b * d.height + y) * d.width * cols + col;
          const T* src = in + (b * d.height + (row_inside ? iy : 0)) * d.width * cin;
          for (long x = 0; x < W; ++x, dst += cols) {
            const long ix = x + shift;
            if (!row_inside || ix < 0 || ix >= W) {
              for (std::size_t c = 0; c < cin; ++c) dst[c] = T{0};
            } else {
              const T* px = src + ix * static_cast<long>(cin);
              for (std::size_t c = 0; c < cin; ++c) dst[c] = px[c];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
void col2im_add(const T* cols_grad, const ImageDims& d, const DilatedConvSpec& spec, T* in_grad) {
  const int k = spec.kernel_size;
  const int l = spec.dilation;
  const int pad = spec.pad();
  const std::size_t cin = d.channels;
  const std::size_t cols = static_cast<std::size_t>(k * k) * cin;
  const auto H = static_cast<long>(d.height);
  const auto W = static_cast<long>(d.width);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (long y = 0; y < H; ++y) {
      for (long x = 0; x < W; ++x) {
        const T* src = cols_grad + ((b * d.height + y) * d.width + x) * cols;
        for (int ky = 0; ky < k; ++ky) {
          const long iy = y + ky * l - pad;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < k; ++kx) {
            const long ix = x + kx * l - pad;
            if (ix < 0 || ix >= W) continue;
            T* dst = in_grad + ((b * d.height + iy) * d.width + ix) * cin;
            const T* g = src + static_cast<std::size_t>(ky * k + kx) * cin;
            for (std::size_t c = 0; c < cin; ++c) dst[c] += g[c];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_direct(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 const DilatedConvSpec& spec, const ImageDims& d, Tensor<T>& out) {
  const int k = spec.kernel_size;
  const int l = spec.dilation;
  const int pad = spec.pad();
  const std::size_t cin = d.channels;
  const auto cout = static_cast<std::size_t>(spec.out_channels);
  const auto H = static_cast<long>(d.height);
  const auto W = static_cast<long>(d.width);
  const T* in = input.raw();
  const T* w = weights.raw();
  std::vector<T> acc(cout);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (long y = 0; y < H; ++y) {
      for (long x = 0; x < W; ++x) {
        std::fill(acc.begin(), acc.end(), T{0});
        for (int ky = 0; ky < k; ++ky) {
          const long iy = y + ky * l - pad;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < k; ++kx) {
            const long ix = x + kx * l - pad;
            if (ix < 0 || ix >= W) continue;
            const T* px = in + ((b * d.height + iy) * d.width + ix) * cin;
            const T* wk = w + static_cast<std::size_t>(ky * k + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T v = px[ci];
              const T* wrow = wk + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) acc[co] += v * wrow[co];
            }
          }
        }
        T* dst = out.raw() + ((b * d.height + y) * d.width + x) * cout;
        for (std::size_t co = 0; co < cout; ++co) dst[co] = acc[co] + bias[co];
      }
    }
  }
}

template <typename T>
void conv_im2col(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 const DilatedConvSpec& spec, const ImageDims& d, Tensor<T>& out) {
  const auto rows = static_cast<Eigen::Index>(d.pixels());
  const auto inner = static_cast<Eigen::Index>(spec.kernel_size * spec.kernel_size) *
                     static_cast<Eigen::Index>(d.channels);
  const auto cout = static_cast<Eigen::Index>(spec.out_channels);
  const T* a = spec.kernel_size == 1 ? input.raw() : im2col(input.raw(), d, spec);
  Eigen::Map<const RowMatrix<T>> lhs(a, rows, inner);
  Eigen::Map<const RowMatrix<T>> rhs(weights.raw(), inner, cout);
  Eigen::Map<RowMatrix<T>> result(out.raw(), rows, cout);
  result.noalias() = lhs * rhs;
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.raw(), cout);
  result.rowwise() += b;
}

template <typename T>
Tensor<T> run_conv(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                   const DilatedConvSpec& spec, ConvAlgorithm algo) {
  const ImageDims d = check_conv_shapes(input, weights, bias, spec);
  Tensor<T> out(image_shape_like(input.shape(), d.height, d.width,
                                 static_cast<std::size_t>(spec.out_channels)));
  if (algo == ConvAlgorithm::Auto) {
    algo = std::is_same_v<T, double> ? ConvAlgorithm::Direct : ConvAlgorithm::Im2col;
  }
  if (algo == ConvAlgorithm::Direct) {
    conv_direct(input, weights, bias, spec, d, out);
  } else {
    conv_im2col(input, weights, bias, spec, d, out);
  }
  return out;
}

template <typename T>
ImageDims same_spatial(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  const ImageDims da = image_dims(a.shape(), what);
  const ImageDims db = image_dims(b.shape(), what);
  if (a.rank() != b.rank() || da.batch != db.batch || da.height != db.height ||
      da.width != db.width) {
    throw DimensionError(std::string(what) + ": spatial extents differ, " +
                         shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  return da;
}

}  // namespace

void DilatedConvSpec::validate() const {
  require_positive(kernel_size, "kernel size");
  require_positive(dilation, "dilation");
  require_positive(in_channels, "input channel count");
  require_positive(out_channels, "output channel count");
  if (kernel_size % 2 == 0) {
    throw std::invalid_argument("kernel size must be odd for same padding, got " +
                                std::to_string(kernel_size));
  }
}

int DilatedConvSpec::effective_kernel_size() const {
  return diunet::effective_kernel_size(kernel_size, dilation);
}

int DilatedConvSpec::pad() const { return (effective_kernel_size() - 1) / 2; }

Shape DilatedConvSpec::weight_shape() const {
  return {static_cast<std::size_t>(kernel_size), static_cast<std::size_t>(kernel_size),
          static_cast<std::size_t>(in_channels), static_cast<std::size_t>(out_channels)};
}

int effective_kernel_size(int kernel_size, int dilation) {
  require_positive(kernel_size, "kernel size");
  require_positive(dilation, "dilation");
  return dilation * (kernel_size - 1) + 1;
}

Rational receptive_field_gain(int kernel_size, int dilation) {
  const std::int64_t ks = effective_kernel_size(kernel_size, dilation);
  std::int64_t num = ks * ks;
  std::int64_t den = static_cast<std::int64_t>(kernel_size) * kernel_size;
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 const DilatedConvSpec& spec, ConvAlgorithm algo) {
  if (spec.dilation != 1) {
    throw std::invalid_argument("conv2d requires dilation 1; use dilated_conv2d");
  }
  return run_conv(input, weights, bias, spec, algo);
}

template <typename T>
Tensor<T> dilated_conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias, const DilatedConvSpec& spec,
                         ConvAlgorithm algo) {
  return run_conv(input, weights, bias, spec, algo);
}

template <typename T>
ConvGrads<T> dilated_conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                     const DilatedConvSpec& spec, const Tensor<T>& grad_out,
                                     bool want_input_grad) {
  const Tensor<T> no_bias(Shape{static_cast<std::size_t>(spec.out_channels)});
  const ImageDims d = check_conv_shapes(input, weights, no_bias, spec);
  const Shape expect = image_shape_like(input.shape(), d.height, d.width,
                                        static_cast<std::size_t>(spec.out_channels));
  if (grad_out.shape() != expect) {
    throw DimensionError("conv output gradient has shape " + shape_string(grad_out.shape()) +
                         ", expected " + shape_string(expect));
  }
  const auto rows = static_cast<Eigen::Index>(d.pixels());
  const auto inner = static_cast<Eigen::Index>(spec.kernel_size * spec.kernel_size) *
                     static_cast<Eigen::Index>(d.channels);
  const auto cout = static_cast<Eigen::Index>(spec.out_channels);

  const T* a = spec.kernel_size == 1 ? input.raw() : im2col(input.raw(), d, spec);
  Eigen::Map<const RowMatrix<T>> lhs(a, rows, inner);
  Eigen::Map<const RowMatrix<T>> w(weights.raw(), inner, cout);
  Eigen::Map<const RowMatrix<T>> g(grad_out.raw(), rows, cout);

  ConvGrads<T> grads;
  grads.weights = Tensor<T>(weights.shape());
  Eigen::Map<RowMatrix<T>> gw(grads.weights.raw(), inner, cout);
  gw.noalias() = lhs.transpose() * g;

  grads.bias = Tensor<T>(Shape{static_cast<std::size_t>(cout)});
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(grads.bias.raw(), cout);
  gb = g.colwise().sum();

  if (want_input_grad) {
    grads.input = Tensor<T>(input.shape());
    if (spec.kernel_size == 1) {
      Eigen::Map<RowMatrix<T>> gi(grads.input.raw(), rows, inner);
      gi.noalias() = g * w.transpose();
    } else {
      Eigen::Map<RowMatrix<T>> gcols(scratch<T>(1, d.pixels() * static_cast<std::size_t>(inner)),
                                     rows, inner);
      gcols.noalias() = g * w.transpose();
      col2im_add(gcols.data(), d, spec, grads.input.raw());
    }
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
  const ImageDims d = image_dims(input.shape());
  if (d.height % 2 != 0 || d.width % 2 != 0) {
    throw DimensionError("maxpool2 needs even spatial extents, got " +
                         shape_string(input.shape()));
  }
  const std::size_t oh = d.height / 2;
  const std::size_t ow = d.width / 2;
  const std::size_t c = d.channels;
  PoolResult<T> res{Tensor<T>(image_shape_like(input.shape(), oh, ow, c)), {}};
  res.argmax.resize(res.output.size());
  const T* in = input.raw();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base00 = ((b * d.height + 2 * y) * d.width + 2 * x) * c;
        const std::size_t offsets[4] = {base00, base00 + c, base00 + d.width * c,
                                        base00 + d.width * c + c};
        const std::size_t out_base = ((b * oh + y) * ow + x) * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = offsets[0] + ch;
          for (int t = 1; t < 4; ++t) {
            const std::size_t idx = offsets[t] + ch;
            if (in[idx] > in[best]) best = idx;
          }
          res.output[out_base + ch] = in[best];
          res.argmax[out_base + ch] = best;
        }
      }
    }
  }
  return res;
}

template <typename T>
Tensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                            const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw DimensionError("maxpool2 gradient does not match recorded indices");
  }
  Tensor<T> grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_out[i];
  return grad;
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& input) {
  const ImageDims d = image_dims(input.shape());
  const std::size_t oh = d.height * 2;
  const std::size_t ow = d.width * 2;
  const std::size_t c = d.channels;
  Tensor<T> out(image_shape_like(input.shape(), oh, ow, c));
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const T* src = input.raw() + ((b * d.height + y / 2) * d.width + x / 2) * c;
        std::copy(src, src + c, out.raw() + ((b * oh + y) * ow + x) * c);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& grad_out) {
  const ImageDims d = image_dims(grad_out.shape(), "upsample2 gradient");
  if (d.height % 2 != 0 || d.width % 2 != 0) {
    throw DimensionError("upsample2 gradient must have even spatial extents");
  }
  const std::size_t h = d.height / 2;
  const std::size_t w = d.width / 2;
  const std::size_t c = d.channels;
  Tensor<T> grad(image_shape_like(grad_out.shape(), h, w, c));
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t y = 0; y < d.height; ++y) {
      for (std::size_t x = 0; x < d.width; ++x) {
        const T* src = grad_out.raw() + ((b * d.height + y) * d.width + x) * c;
        T* dst = grad.raw() + ((b * h + y / 2) * w + x / 2) * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
      }
    }
  }
  return grad;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels needs at least one input");
  const ImageDims d = image_dims(parts.front()->shape(), "concat input");
  std::size_t total = 0;
  for (const Tensor<T>* p : parts) {
    same_spatial(*parts.front(), *p, "concat_channels");
    total += image_dims(p->shape()).channels;
  }
  Tensor<T> out(image_shape_like(parts.front()->shape(), d.height, d.width, total));
  const std::size_t pixels = d.pixels();
  std::size_t offset = 0;
  for (const Tensor<T>* p : parts) {
    const std::size_t c = image_dims(p->shape()).channels;
    for (std::size_t px = 0; px < pixels; ++px) {
      std::copy_n(p->raw() + px * c, c, out.raw() + px * total + offset);
    }
    offset += c;
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin, std::size_t end) {
  const ImageDims d = image_dims(input.shape());
  if (begin > end || end > d.channels) {
    throw DimensionError("channel slice [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_string(input.shape()));
  }
  const std::size_t c = end - begin;
  Tensor<T> out(image_shape_like(input.shape(), d.height, d.width, c));
  for (std::size_t px = 0; px < d.pixels(); ++px) {
    std::copy_n(input.raw() + px * d.channels + begin, c, out.raw() + px * c);
  }
  return out;
}

#define DIUNET_INSTANTIATE(T)                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                \
                            const DilatedConvSpec&, ConvAlgorithm);                              \
  template Tensor<T> dilated_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                    const DilatedConvSpec&, ConvAlgorithm);                      \
  template ConvGrads<T> dilated_conv2d_backward(const Tensor<T>&, const Tensor<T>&,              \
                                                const DilatedConvSpec&, const Tensor<T>&, bool); \
  template PoolResult<T> maxpool2(const Tensor<T>&);                                             \
  template Tensor<T> maxpool2_backward(const Shape&, const std::vector<std::size_t>&,            \
                                       const Tensor<T>&);                                        \
  template Tensor<T> upsample2(const Tensor<T>&);                                                \
  template Tensor<T> upsample2_backward(const Tensor<T>&);                                       \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                      \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);

DIUNET_INSTANTIATE(float)
DIUNET_INSTANTIATE(double)

#undef DIUNET_INSTANTIATE

}  // namespace diunet
