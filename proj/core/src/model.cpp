#include "diunet/model.hpp"

#include <cmath>
#include <stdexcept>

namespace diunet {

std::string to_string(Variant v) { return v == Variant::Dilated ? "dilated" : "baseline"; }

Variant parse_variant(const std::string& text) {
  if (text == "dilated") return Variant::Dilated;
  if (text == "baseline") return Variant::Baseline;
  throw std::invalid_argument("unknown model variant '" + text +
                              "' (expected dilated or baseline)");
}

DilatedInceptionSpec DilatedInceptionSpec::dilated(int branch_filters, int kernel_size,
                                                   std::vector<int> dilations) {
  DilatedInceptionSpec s;
  s.branch_filters = branch_filters;
  for (int l : dilations) s.branches.push_back({kernel_size, l});
  return s;
}

DilatedInceptionSpec DilatedInceptionSpec::baseline(int branch_filters) {
  DilatedInceptionSpec s;
  s.branch_filters = branch_filters;
  s.branches = {{1, 1}, {3, 1}, {5, 1}};
  return s;
}

DilatedInceptionSpec DilatedInceptionSpec::for_variant(Variant v, int branch_filters) {
  return v == Variant::Dilated ? dilated(branch_filters) : baseline(branch_filters);
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) {
      throw std::invalid_argument(std::string("model ") + what + " must be positive, got " +
                                  std::to_string(v));
    }
  };
  positive(depth, "depth");
  positive(base_filters, "base_filters");
  positive(height, "height");
  positive(width, "width");
  positive(channels, "input channels");
  positive(classes, "classes");
  if (depth > 8 || (static_cast<long>(base_filters) << depth) > 8192) {
    throw std::invalid_argument("base_filters * 2^depth exceeds the supported size");
  }
  const int step = 1 << depth;
  if (height % step != 0 || width % step != 0) {
    throw std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by 2^depth = " + std::to_string(step));
  }
}

ModelConfig ModelConfig::desk_scale(Variant v) {
  ModelConfig c;
  c.depth = 4;
  c.base_filters = 8;
  c.height = c.width = 64;
  c.variant = v;
  return c;
}

ModelConfig ModelConfig::paper_scale(Variant v) {
  ModelConfig c;
  c.depth = 4;
  c.base_filters = 32;
  c.height = c.width = 128;
  c.variant = v;
  return c;
}

template <typename T>
InceptionModule<T>::InceptionModule(const std::string& name, const DilatedInceptionSpec& spec,
                                    int in_channels, Rng& rng)
    : name_(name), spec_(spec), in_channels_(in_channels) {
  if (in_channels < 1) throw std::invalid_argument("inception module needs in_channels >= 1");
  if (spec.branch_filters < 1) throw std::invalid_argument("branch_filters must be positive");
  const int c = spec.branch_filters;
  for (std::size_t j = 0; j < spec.branches.size(); ++j) {
    const std::string prefix = name + ".b" + std::to_string(j);
    const BranchSpec& b = spec.branches[j];
    Branch branch{
        ConvBlock<T>(prefix + ".reduce", DilatedConvSpec{1, 1, in_channels, c}, rng),
        ConvBlock<T>(prefix + ".spatial", DilatedConvSpec{b.kernel_size, b.dilation, c, c}, rng)};
    branches_.push_back(std::move(branch));
  }
}

template <typename T>
Var InceptionModule<T>::forward(Tape<T>& tape, Var x, const ForwardOptions& opts) {
  std::vector<Var> outs;
  outs.reserve(branches_.size());
  for (Branch& b : branches_) {
    outs.push_back(b.spatial.forward(tape, b.reduce.forward(tape, x, opts), opts));
  }
  return ad::concat(tape, outs);
}

template <typename T>
std::size_t InceptionModule<T>::parameter_count() const {
  std::size_t n = 0;
  for (const Branch& b : branches_) n += b.reduce.parameter_count() + b.spatial.parameter_count();
  return n;
}

template <typename T>
void InceptionModule<T>::collect(std::vector<Parameter<T>*>& params,
                                 std::vector<BufferRef<T>>& buffers) {
  for (Branch& b : branches_) {
    b.reduce.collect(params, buffers);
    b.spatial.collect(params, buffers);
  }
}

template <typename T>
InceptionModule<T> build_inception_module(const DilatedInceptionSpec& spec, int in_channels,
                                          Rng& rng, const std::string& name) {
  return InceptionModule<T>(name, spec, in_channels, rng);
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int depth = config_.depth;
  auto module_spec = [&](int level) {
    return DilatedInceptionSpec::for_variant(config_.variant, config_.filters_at(level));
  };

  int in = config_.channels;
  for (int i = 0; i < depth; ++i) {
    down_.emplace_back("down" + std::to_string(i), module_spec(i), in, rng);
    in = down_.back().out_channels();
  }
  bottleneck_ = InceptionModule<T>("bottleneck", module_spec(depth), in, rng);
  in = bottleneck_.out_channels();

  up_proj_.resize(static_cast<std::size_t>(depth));
  up_.resize(static_cast<std::size_t>(depth));
  for (int i = depth - 1; i >= 0; --i) {
    const int skip = down_[static_cast<std::size_t>(i)].out_channels();
    const std::string name = "up" + std::to_string(i);
    up_proj_[static_cast<std::size_t>(i)] =
        ConvLayer<T>(name + ".proj", DilatedConvSpec{1, 1, in, skip}, rng);
    up_[static_cast<std::size_t>(i)] = InceptionModule<T>(name, module_spec(i), 2 * skip, rng);
    in = up_[static_cast<std::size_t>(i)].out_channels();
  }
  head_ = ConvLayer<T>("head", DilatedConvSpec{1, 1, in, config_.classes}, rng);

  const auto d = static_cast<std::size_t>(config_.channels);
  input_mean_ = Tensor<T>(Shape{d});
  input_std_ = Tensor<T>(Shape{d}, T{1});
}

template <typename T>
Var Model<T>::forward(Tape<T>& tape, Var input, const ForwardOptions& opts) {
  const Shape& s = tape.value(input).shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(config_.height) ||
      s[2] != static_cast<std::size_t>(config_.width) ||
      s[3] != static_cast<std::size_t>(config_.channels)) {
    throw DimensionError("layer input: expected (B, " + std::to_string(config_.height) + ", " +
                         std::to_string(config_.width) + ", " +
                         std::to_string(config_.channels) + "), got " + shape_string(s));
  }
  std::vector<Var> skips;
  Var x = input;
  for (auto& m : down_) {
    x = m.forward(tape, x, opts);
    skips.push_back(x);
    x = ad::maxpool2(tape, x);
  }
  x = bottleneck_.forward(tape, x, opts);
  for (std::size_t i = down_.size(); i-- > 0;) {
    x = up_proj_[i].forward(tape, ad::upsample2(tape, x));
    x = ad::concat(tape, {skips[i], x});
    x = up_[i].forward(tape, x, opts);
  }
  return ad::sigmoid(tape, head_.forward(tape, x));
}

template <typename T>
Tensor<T> Model<T>::normalize_input(const Tensor<T>& images) const {
  const ImageDims d = image_dims(images.shape(), "model input");
  if (d.channels != input_mean_.size()) {
    throw DimensionError("layer input: image has " + std::to_string(d.channels) +
                         " channels, model expects " + std::to_string(input_mean_.size()));
  }
  Tensor<T> out(images.shape());
  for (std::size_t p = 0; p < d.pixels(); ++p) {
    for (std::size_t c = 0; c < d.channels; ++c) {
      const std::size_t i = p * d.channels + c;
      out[i] = static_cast<T>((static_cast<double>(images[i]) - input_mean_[c]) /
                              (static_cast<double>(input_std_[c]) + 1e-8));
    }
  }
  return out;
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& raw_images) {
  Tensor<T> batch = normalize_input(raw_images);
  const bool single = batch.rank() == 3;
  if (single) {
    Shape s = batch.shape();
    s.insert(s.begin(), 1);
    batch = batch.reshaped(s);
  }
  Tape<T> tape;
  Tensor<T> out =
      tape.value(forward(tape, tape.constant(std::move(batch)), {Phase::Infer, false}));
  if (single) {
    Shape s = out.shape();
    s.erase(s.begin());
    out = out.reshaped(s);
  }
  return out;
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> params;
  std::vector<BufferRef<T>> buffers;
  for (auto& m : down_) m.collect(params, buffers);
  bottleneck_.collect(params, buffers);
  for (std::size_t i = up_.size(); i-- > 0;) {
    up_proj_[i].collect(params, buffers);
    up_[i].collect(params, buffers);
  }
  head_.collect(params, buffers);
  return params;
}

template <typename T>
std::vector<BufferRef<T>> Model<T>::buffers() {
  std::vector<Parameter<T>*> params;
  std::vector<BufferRef<T>> buffers{{"input.mean", &input_mean_}, {"input.std", &input_std_}};
  for (auto& m : down_) m.collect(params, buffers);
  bottleneck_.collect(params, buffers);
  for (std::size_t i = up_.size(); i-- > 0;) {
    up_proj_[i].collect(params, buffers);
    up_[i].collect(params, buffers);
  }
  head_.collect(params, buffers);
  return buffers;
}

template <typename T>
Model<T> build_diunet(ModelConfig config, std::uint64_t seed) {
  config.variant = Variant::Dilated;
  return Model<T>(config, seed);
}

template <typename T>
Model<T> build_baseline_inception_unet(ModelConfig config, std::uint64_t seed) {
  config.variant = Variant::Baseline;
  return Model<T>(config, seed);
}

template <typename T>
std::size_t count_params(Model<T>& model) {
  std::size_t n = 0;
  for (const Parameter<T>* p : model.parameters()) n += p->value.size();
  return n;
}

template class InceptionModule<float>;
template class InceptionModule<double>;
template class Model<float>;
template class Model<double>;

template InceptionModule<float> build_inception_module(const DilatedInceptionSpec&, int, Rng&,
                                                       const std::string&);
template InceptionModule<double> build_inception_module(const DilatedInceptionSpec&, int, Rng&,
                                                        const std::string&);
template Model<float> build_diunet(ModelConfig, std::uint64_t);
template Model<double> build_diunet(ModelConfig, std::uint64_t);
template Model<float> build_baseline_inception_unet(ModelConfig, std::uint64_t);
template Model<double> build_baseline_inception_unet(ModelConfig, std::uint64_t);
template std::size_t count_params(Model<float>&);
template std::size_t count_params(Model<double>&);

}  // namespace diunet
