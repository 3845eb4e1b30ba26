#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "diunet/dataset.hpp"
#include "diunet/metrics.hpp"
#include "diunet/tensor.hpp"

namespace diunet {

/// Inclusive pixel bounds.
struct BoundingBox {
  std::size_t row0 = 0, row1 = 0;
  std::size_t col0 = 0, col1 = 0;

  std::size_t height() const { return row1 - row0 + 1; }
  std::size_t width() const { return col1 - col0 + 1; }
  bool operator==(const BoundingBox&) const = default;
};

/// Tightest box around every pixel that is nonzero in any channel of an
/// (N, M, D) image. Throws when the image is entirely zero.
BoundingBox bounding_box(const Tensor<float>& image);

/// Crops an (N, M) or (N, M, D) tensor to the box.
template <typename T>
Tensor<T> crop(const Tensor<T>& image, const BoundingBox& box);

/// Bilinear resampling of an (N, M, D) image with half-pixel centres and
/// edge clamping; a same-size resize is the identity.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width);

/// Nearest-neighbour resampling of a label map, so no new label values appear.
LabelMap resize_nearest(const LabelMap& labels, std::size_t height, std::size_t width);

bool has_tumor(const LabelMap& labels);

/// Nearest-rank percentile: the value at 1-based rank ceil(p/100 * n) of the
/// sorted sample (rank clamped to [1, n]).
double percentile_nearest_rank(std::span<const float> values, double p);

/// Clips one channel to its [p1, p99] range and maps it linearly onto
/// [0, 255]. A channel whose anchors coincide maps to all zeros.
std::vector<float> window_intensity(std::span<const float> channel);

/// window_intensity applied to each channel of an (N, M, D) image.
Tensor<float> window_channels(const Tensor<float>& image);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;  // population standard deviation
};

inline constexpr double kZscoreEpsilon = 1e-8;

/// Per-channel mean and standard deviation over every pixel of the listed
/// samples.
ChannelStats channel_stats(const Dataset& dataset, std::span<const std::size_t> ids);

/// (x - mean) / (std + 1e-8) per channel of an (N, M, D) or (B, N, M, D)
/// tensor.
Tensor<float> zscore(const Tensor<float>& image, const ChannelStats& stats);

/// Steps 1-4 for one slice: crop to the brain, resize to target x target,
/// drop the slice if it shows no tumour, window each modality. The z-score
/// step needs training-fold statistics and happens at training time.
std::optional<SegmentationSample> preprocess_sample(const SegmentationSample& sample,
                                                    std::size_t target);

/// preprocess_sample over a dataset, keeping the surviving slices in order.
Dataset preprocess_dataset(const Dataset& dataset, std::size_t target);

}  // namespace diunet
