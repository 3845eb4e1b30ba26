#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diunet/autodiff.hpp"
#include "diunet/conv.hpp"

namespace diunet {

using Rng = std::mt19937_64;

/// Non-trainable named state (batch-norm running statistics, input
/// normalisation) that still travels with a saved model.
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* tensor;
};

/// Samples N(0, sqrt(2 / fan_in)).
template <typename T>
Tensor<T> he_init(const Shape& shape, std::size_t fan_in, Rng& rng);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
class ConvLayer {
 public:
  ConvLayer() = default;
  /// He-initialised weights, zero bias.
  ConvLayer(std::string name, const DilatedConvSpec& spec, Rng& rng);

  /// Shape errors are rethrown with the layer name prepended.
  Var forward(Tape<T>& tape, Var x) const;

  const std::string& name() const noexcept { return name_; }
  const DilatedConvSpec& spec() const noexcept { return spec_; }
  Parameter<T>& weights() noexcept { return weights_; }
  Parameter<T>& bias() noexcept { return bias_; }
  const Parameter<T>& weights() const noexcept { return weights_; }
  const Parameter<T>& bias() const noexcept { return bias_; }

  std::size_t parameter_count() const noexcept { return weights_.value.size() + bias_.value.size(); }
  void collect(std::vector<Parameter<T>*>& params, std::vector<BufferRef<T>>& buffers);

 private:
  std::string name_;
  DilatedConvSpec spec_;
  Parameter<T> weights_;
  Parameter<T> bias_;
};

template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  /// gamma = 1, beta = 0, running mean 0, running variance 1.
  BatchNormLayer(std::string name, std::size_t channels, BatchNormHyper hyper = {});

  Var forward(Tape<T>& tape, Var x, const ForwardOptions& opts);
  /// relu(forward(x)) recorded as one node.
  Var forward_relu(Tape<T>& tape, Var x, const ForwardOptions& opts);

  const std::string& name() const noexcept { return name_; }
  Parameter<T>& gamma() noexcept { return gamma_; }
  Parameter<T>& beta() noexcept { return beta_; }
  RunningStats<T>& running() noexcept { return running_; }
  const RunningStats<T>& running() const noexcept { return running_; }
  const BatchNormHyper& hyper() const noexcept { return hyper_; }

  std::size_t parameter_count() const noexcept { return gamma_.value.size() + beta_.value.size(); }
  void collect(std::vector<Parameter<T>*>& params, std::vector<BufferRef<T>>& buffers);

 private:
  std::string name_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  RunningStats<T> running_;
  BatchNormHyper hyper_;
};

/// Tape-free batch normalisation, mainly for inspection and tests. Train
/// phase updates the layer's running statistics.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormLayer<T>& layer, Phase phase);

/// The unit every convolution inside an Inception branch is wrapped in:
/// convolution, then batch normalisation, then ReLU.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, const DilatedConvSpec& spec, Rng& rng);

  Var forward(Tape<T>& tape, Var x, const ForwardOptions& opts);

  ConvLayer<T>& conv() noexcept { return conv_; }
  const ConvLayer<T>& conv() const noexcept { return conv_; }
  BatchNormLayer<T>& norm() noexcept { return norm_; }

  std::size_t parameter_count() const noexcept {
    return conv_.parameter_count() + norm_.parameter_count();
  }
  void collect(std::vector<Parameter<T>*>& params, std::vector<BufferRef<T>>& buffers);

 private:
  ConvLayer<T> conv_;
  BatchNormLayer<T> norm_;
};

extern template class ConvLayer<float>;
extern template class ConvLayer<double>;
extern template class BatchNormLayer<float>;
extern template class BatchNormLayer<double>;
extern template class ConvBlock<float>;
extern template class ConvBlock<double>;

}  // namespace diunet
