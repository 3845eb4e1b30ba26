#pragma once

#include <cstdint>

#include "diunet/tensor.hpp"

namespace diunet {

/// Smoothing added to numerator and denominator of the soft Dice inside
/// the training loss.
inline constexpr double kLossSmoothing = 1.0;
/// Smoothing for reported Dice; makes dice(empty, empty) == 1.
inline constexpr double kMetricSmoothing = 1e-7;
inline constexpr double kDefaultThreshold = 0.5;

using Mask = Tensor<std::uint8_t>;
/// Per-pixel intra-tumoral label in {0, 1, 2, 4}.
using LabelMap = Tensor<std::uint8_t>;

/// Output channel k of the network predicts this label.
inline constexpr std::uint8_t kStructureLabels[3] = {1, 2, 4};

/// (2*sum(P*G) + eps) / (sum(P) + sum(G) + eps). Works on binary masks
/// and on soft maps alike.
template <typename T>
double dice_score(const Tensor<T>& predicted, const Tensor<T>& truth,
                  double smoothing = kMetricSmoothing);

/// -log of the mean per-channel soft Dice, computed per sample over
/// (H, W, K) or (B, H, W, K) tensors and averaged over the batch. When
/// `grad` is non-null it receives d(loss)/d(predicted).
template <typename T>
double dice_loss(const Tensor<T>& predicted, const Tensor<T>& truth,
                 double smoothing = kLossSmoothing, Tensor<T>* grad = nullptr);

/// Elementwise predicted >= threshold.
template <typename T>
Mask binarize(const Tensor<T>& predicted, double threshold = kDefaultThreshold);

struct SubRegionMasks {
  Mask wt;  // labels 1, 2, 4
  Mask tc;  // labels 1, 4
  Mask et;  // label 4
};

/// Throws std::invalid_argument naming the first pixel whose value is not
/// one of {0, 1, 2, 4}.
void validate_labels(const LabelMap& labels);

SubRegionMasks compose_subregions(const LabelMap& labels);

/// `channels` is (N, M, 3) binary, channel order (label 1, label 2, label 4).
SubRegionMasks compose_from_channels(const Mask& channels);

/// (N, M, 3) indicator tensor in the network's channel order.
template <typename T>
Tensor<T> structure_targets(const LabelMap& labels);

struct SubRegionDice {
  double wt = 0.0;
  double tc = 0.0;
  double et = 0.0;
};

SubRegionDice subregion_dice(const SubRegionMasks& predicted, const SubRegionMasks& truth);

}  // namespace diunet
