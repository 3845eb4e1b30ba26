#include "diunet/layers.hpp"

#include <cmath>

namespace diunet {

template <typename T>
Tensor<T> he_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw std::invalid_argument("he_init needs fan_in >= 1");
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(normal(rng));
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tape<T> tape;
  return tape.value(ad::sigmoid(tape, tape.constant(x)));
}

template <typename T>
ConvLayer<T>::ConvLayer(std::string name, const DilatedConvSpec& spec, Rng& rng)
    : name_(std::move(name)), spec_(spec) {
  spec_.validate();
  const std::size_t fan_in =
      static_cast<std::size_t>(spec.kernel_size * spec.kernel_size * spec.in_channels);
  weights_ = {name_ + ".weight", he_init<T>(spec.weight_shape(), fan_in, rng)};
  bias_ = {name_ + ".bias", Tensor<T>(Shape{static_cast<std::size_t>(spec.out_channels)})};
}

template <typename T>
Var ConvLayer<T>::forward(Tape<T>& tape, Var x) const {
  try {
    return ad::conv2d(tape, x, tape.parameter(weights_), tape.parameter(bias_), spec_);
  } catch (const DimensionError& e) {
    throw DimensionError("layer " + name_ + ": " + e.what());
  }
}

template <typename T>
void ConvLayer<T>::collect(std::vector<Parameter<T>*>& params, std::vector<BufferRef<T>>&) {
  params.push_back(&weights_);
  params.push_back(&bias_);
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::string name, std::size_t channels, BatchNormHyper hyper)
    : name_(std::move(name)),
      gamma_{name_ + ".gamma", Tensor<T>(Shape{channels}, T{1})},
      beta_{name_ + ".beta", Tensor<T>(Shape{channels})},
      running_{Tensor<T>(Shape{channels}), Tensor<T>(Shape{channels}, T{1})},
      hyper_(hyper) {
  if (!(hyper.epsilon > 0.0)) throw std::invalid_argument("batch norm epsilon must be positive");
}

template <typename T>
Var BatchNormLayer<T>::forward(Tape<T>& tape, Var x, const ForwardOptions& opts) {
  try {
    return ad::batch_norm(tape, x, tape.parameter(gamma_), tape.parameter(beta_), running_,
                          hyper_, opts);
  } catch (const DimensionError& e) {
    throw DimensionError("layer " + name_ + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("layer " + name_ + ": " + e.what());
  }
}

template <typename T>
Var BatchNormLayer<T>::forward_relu(Tape<T>& tape, Var x, const ForwardOptions& opts) {
  try {
    return ad::batch_norm_relu(tape, x, tape.parameter(gamma_), tape.parameter(beta_), running_,
                               hyper_, opts);
  } catch (const DimensionError& e) {
    throw DimensionError("layer " + name_ + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("layer " + name_ + ": " + e.what());
  }
}

template <typename T>
void BatchNormLayer<T>::collect(std::vector<Parameter<T>*>& params,
                                std::vector<BufferRef<T>>& buffers) {
  params.push_back(&gamma_);
  params.push_back(&beta_);
  buffers.push_back({name_ + ".running_mean", &running_.mean});
  buffers.push_back({name_ + ".running_var", &running_.var});
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormLayer<T>& layer, Phase phase) {
  Tape<T> tape;
  return tape.value(layer.forward(tape, tape.constant(x), ForwardOptions{phase, true}));
}

template <typename T>
ConvBlock<T>::ConvBlock(const std::string& name, const DilatedConvSpec& spec, Rng& rng)
    : conv_(name + ".conv", spec, rng),
      norm_(name + ".bn", static_cast<std::size_t>(spec.out_channels)) {}

template <typename T>
Var ConvBlock<T>::forward(Tape<T>& tape, Var x, const ForwardOptions& opts) {
  return norm_.forward_relu(tape, conv_.forward(tape, x), opts);
}

template <typename T>
void ConvBlock<T>::collect(std::vector<Parameter<T>*>& params,
                           std::vector<BufferRef<T>>& buffers) {
  conv_.collect(params, buffers);
  norm_.collect(params, buffers);
}

template class ConvLayer<float>;
template class ConvLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;
template class ConvBlock<float>;
template class ConvBlock<double>;

template Tensor<float> he_init(const Shape&, std::size_t, Rng&);
template Tensor<double> he_init(const Shape&, std::size_t, Rng&);
template Tensor<float> relu(const Tensor<float>&);
template Tensor<double> relu(const Tensor<double>&);
template Tensor<float> sigmoid(const Tensor<float>&);
template Tensor<double> sigmoid(const Tensor<double>&);
template Tensor<float> batchnorm_forward(const Tensor<float>&, BatchNormLayer<float>&, Phase);
template Tensor<double> batchnorm_forward(const Tensor<double>&, BatchNormLayer<double>&, Phase);

}  // namespace diunet
