#pragma once

#include <cstdint>
#include <vector>

#include "diunet/tensor.hpp"

namespace diunet {

enum class Padding { Same };

/// Geometry of a stride-1 convolution with optional tap spacing (dilation).
struct DilatedConvSpec {
  int kernel_size = 3;
  int dilation = 1;
  int in_channels = 1;
  int out_channels = 1;
  Padding padding = Padding::Same;

  /// Throws std::invalid_argument for even or non-positive kernels and
  /// non-positive dilation or channel counts.
  void validate() const;
  int effective_kernel_size() const;
  /// Zero rows/columns added on each side to keep H and W unchanged.
  int pad() const;
  Shape weight_shape() const;
};

/// Side length of the sparse kernel a k-tap filter covers at dilation l:
/// l*(k-1)+1.
int effective_kernel_size(int kernel_size, int dilation);

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

/// Growth of the covered area relative to the undilated kernel,
/// (k_s / k)^2, in lowest terms.
Rational receptive_field_gain(int kernel_size, int dilation);

enum class ConvAlgorithm {
  Auto,    // Direct for double, Im2col for float
  Direct,  // per-output summation over (ky, kx, cin) in row-major order
  Im2col,  // patch matrix times weight matrix
};

/// Standard convolution; requires spec.dilation == 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 const DilatedConvSpec& spec, ConvAlgorithm algo = ConvAlgorithm::Auto);

/// out[p] = sum_s in[p + l*s] * w[s] + b with zero padding outside the image.
template <typename T>
Tensor<T> dilated_conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias, const DilatedConvSpec& spec,
                         ConvAlgorithm algo = ConvAlgorithm::Auto);

template <typename T>
struct ConvGrads {
  Tensor<T> input;    // empty when not requested
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
ConvGrads<T> dilated_conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                     const DilatedConvSpec& spec, const Tensor<T>& grad_out,
                                     bool want_input_grad = true);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat index into the input of the element chosen for each output.
  std::vector<std::size_t> argmax;
};

/// 2x2 non-overlapping max pooling. Ties resolve to the first maximal element
/// in row-major window order.
template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                            const Tensor<T>& grad_out);

/// Nearest-neighbour 2x enlargement: every pixel becomes a 2x2 block.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& input);

/// Adjoint of upsample2: sums each 2x2 block.
template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& grad_out);

/// Channel concatenation; channels of `parts[0]` come first.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_channels<T>({&a, &b});
}

/// Channel range [begin, end) of an image tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin, std::size_t end);

}  // namespace diunet
