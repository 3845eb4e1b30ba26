#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diunet/layers.hpp"

namespace diunet {

enum class Variant { Dilated, Baseline };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

struct BranchSpec {
  int kernel_size = 3;
  int dilation = 1;
};

/// Three parallel branches, each a 1x1 reduction followed by a spatial
/// convolution; branch outputs are concatenated to 3*c channels.
struct DilatedInceptionSpec {
  int branch_filters = 8;
  std::vector<BranchSpec> branches;

  /// 1x1 -> 3x3 at dilation 1, 2 and 3.
  static DilatedInceptionSpec dilated(int branch_filters, int kernel_size = 3,
                                      std::vector<int> dilations = {1, 2, 3});
  /// 1x1 -> {1x1, 3x3, 5x5}, all undilated.
  static DilatedInceptionSpec baseline(int branch_filters);
  static DilatedInceptionSpec for_variant(Variant v, int branch_filters);

  int out_channels() const { return branch_filters * static_cast<int>(branches.size()); }
};

struct ModelConfig {
  int depth = 4;
  int base_filters = 8;
  int height = 64;    // N
  int width = 64;     // M
  int channels = 4;   // D
  int classes = 3;    // K
  Variant variant = Variant::Dilated;

  /// Throws std::invalid_argument when the spatial extent is not divisible
  /// by 2^depth or any field is out of range.
  void validate() const;
  int filters_at(int level) const { return base_filters << level; }

  static ModelConfig desk_scale(Variant v = Variant::Dilated);
  static ModelConfig paper_scale(Variant v = Variant::Dilated);

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
class InceptionModule {
 public:
  struct Branch {
    ConvBlock<T> reduce;
    ConvBlock<T> spatial;
  };

  InceptionModule() = default;
  InceptionModule(const std::string& name, const DilatedInceptionSpec& spec, int in_channels,
                  Rng& rng);

  Var forward(Tape<T>& tape, Var x, const ForwardOptions& opts);

  const std::string& name() const noexcept { return name_; }
  int in_channels() const noexcept { return in_channels_; }
  int out_channels() const noexcept { return spec_.out_channels(); }
  const DilatedInceptionSpec& spec() const noexcept { return spec_; }
  std::vector<Branch>& branches() noexcept { return branches_; }

  std::size_t parameter_count() const;
  void collect(std::vector<Parameter<T>*>& params, std::vector<BufferRef<T>>& buffers);

 private:
  std::string name_;
  DilatedInceptionSpec spec_;
  int in_channels_ = 0;
  std::vector<Branch> branches_;
};

template <typename T>
InceptionModule<T> build_inception_module(const DilatedInceptionSpec& spec, int in_channels,
                                          Rng& rng, const std::string& name = "module");

/// Contracting path of `depth` Inception modules with 2x max pooling,
/// a bottleneck module, and an expanding path. Each expanding level
/// upsamples, projects to the skip connection's width with a 1x1
/// convolution, concatenates [skip, upsampled] (twice the skip width) and
/// applies a module with the matching filter count. A 1x1 convolution
/// maps to K channels, followed by a per-channel sigmoid.
template <typename T>
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, std::uint64_t seed);

  /// `input` is (B, N, M, D), already normalised. Returns (B, N, M, K)
  /// probabilities.
  Var forward(Tape<T>& tape, Var input, const ForwardOptions& opts);

  /// Applies the stored per-channel input normalisation.
  Tensor<T> normalize_input(const Tensor<T>& images) const;
  /// Normalise, then run in inference phase.
  Tensor<T> predict(const Tensor<T>& raw_images);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<InceptionModule<T>>& contracting() noexcept { return down_; }
  InceptionModule<T>& bottleneck() noexcept { return bottleneck_; }
  std::vector<InceptionModule<T>>& expanding() noexcept { return up_; }

  Tensor<T>& input_mean() noexcept { return input_mean_; }
  Tensor<T>& input_std() noexcept { return input_std_; }

  /// Trainable tensors in build order.
  std::vector<Parameter<T>*> parameters();
  /// Running statistics and input normalisation, in build order.
  std::vector<BufferRef<T>> buffers();

 private:
  ModelConfig config_;
  std::vector<InceptionModule<T>> down_;
  InceptionModule<T> bottleneck_;
  std::vector<ConvLayer<T>> up_proj_;  // indexed by level
  std::vector<InceptionModule<T>> up_;  // indexed by level
  ConvLayer<T> head_;
  Tensor<T> input_mean_;
  Tensor<T> input_std_;
};

template <typename T>
Model<T> build_diunet(ModelConfig config, std::uint64_t seed);

template <typename T>
Model<T> build_baseline_inception_unet(ModelConfig config, std::uint64_t seed);

template <typename T>
std::size_t count_params(Model<T>& model);

extern template class InceptionModule<float>;
extern template class InceptionModule<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace diunet
