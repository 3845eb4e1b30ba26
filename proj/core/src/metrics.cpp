#include "diunet/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diunet {

template <typename T>
double dice_score(const Tensor<T>& predicted, const Tensor<T>& truth, double smoothing) {
  if (predicted.shape() != truth.shape()) {
    throw DimensionError("dice_score shapes differ: " + shape_string(predicted.shape()) +
                         " vs " + shape_string(truth.shape()));
  }
  double inter = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double p = static_cast<double>(predicted[i]);
    const double g = static_cast<double>(truth[i]);
    inter += p * g;
    total += p + g;
  }
  return (2.0 * inter + smoothing) / (total + smoothing);
}

template <typename T>
double dice_loss(const Tensor<T>& predicted, const Tensor<T>& truth, double smoothing,
                 Tensor<T>* grad) {
  if (predicted.shape() != truth.shape()) {
    throw DimensionError("dice_loss shapes differ: " + shape_string(predicted.shape()) +
                         " vs " + shape_string(truth.shape()));
  }
  const ImageDims d = image_dims(predicted.shape(), "dice_loss input");
  const std::size_t k = d.channels;
  if (k == 0) throw DimensionError("dice_loss needs at least one class channel");
  const std::size_t per_sample = d.height * d.width;
  if (grad) *grad = Tensor<T>(predicted.shape());

  std::vector<double> inter(k), total(k), dice(k);
  double loss = 0.0;
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::fill(inter.begin(), inter.end(), 0.0);
    std::fill(total.begin(), total.end(), 0.0);
    const std::size_t base = b * per_sample * k;
    for (std::size_t px = 0; px < per_sample; ++px) {
      for (std::size_t c = 0; c < k; ++c) {
        const double p = static_cast<double>(predicted[base + px * k + c]);
        const double g = static_cast<double>(truth[base + px * k + c]);
        inter[c] += p * g;
        total[c] += p + g;
      }
    }
    double mean = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      dice[c] = (2.0 * inter[c] + smoothing) / (total[c] + smoothing);
      mean += dice[c];
    }
    mean /= static_cast<double>(k);
    loss -= std::log(mean);
    if (grad) {
      // d(-log mean)/d(dice_c) = -1 / (K * mean), then averaged over batch.
      const double outer = -1.0 / (static_cast<double>(k) * mean * static_cast<double>(d.batch));
      std::vector<double> coef_g(k), coef_1(k);
      for (std::size_t c = 0; c < k; ++c) {
        const double denom = total[c] + smoothing;
        coef_g[c] = outer * 2.0 / denom;
        coef_1[c] = -outer * (2.0 * inter[c] + smoothing) / (denom * denom);
      }
      for (std::size_t px = 0; px < per_sample; ++px) {
        for (std::size_t c = 0; c < k; ++c) {
          const std::size_t i = base + px * k + c;
          (*grad)[i] = static_cast<T>(coef_g[c] * static_cast<double>(truth[i]) + coef_1[c]);
        }
      }
    }
  }
  return loss / static_cast<double>(d.batch);
}

template <typename T>
Mask binarize(const Tensor<T>& predicted, double threshold) {
  Mask out(predicted.shape());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    out[i] = static_cast<double>(predicted[i]) >= threshold ? 1 : 0;
  }
  return out;
}

void validate_labels(const LabelMap& labels) {
  if (labels.rank() != 2) {
    throw DimensionError("label map must be (N, M), got " + shape_string(labels.shape()));
  }
  const std::size_t w = labels.dim(1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto v = labels[i];
    if (v != 0 && v != 1 && v != 2 && v != 4) {
      throw std::invalid_argument("illegal label " + std::to_string(v) + " at row " +
                                  std::to_string(i / w) + ", column " + std::to_string(i % w));
    }
  }
}

SubRegionMasks compose_subregions(const LabelMap& labels) {
  validate_labels(labels);
  SubRegionMasks m{Mask(labels.shape()), Mask(labels.shape()), Mask(labels.shape())};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto v = labels[i];
    m.wt[i] = v != 0;
    m.tc[i] = v == 1 || v == 4;
    m.et[i] = v == 4;
  }
  return m;
}

SubRegionMasks compose_from_channels(const Mask& channels) {
  if (channels.rank() != 3 || channels.dim(2) != 3) {
    throw DimensionError("prediction must be (N, M, 3), got " + shape_string(channels.shape()));
  }
  const Shape plane{channels.dim(0), channels.dim(1)};
  SubRegionMasks m{Mask(plane), Mask(plane), Mask(plane)};
  for (std::size_t i = 0; i < m.wt.size(); ++i) {
    const bool l1 = channels[3 * i] != 0;
    const bool l2 = channels[3 * i + 1] != 0;
    const bool l4 = channels[3 * i + 2] != 0;
    m.wt[i] = l1 || l2 || l4;
    m.tc[i] = l1 || l4;
    m.et[i] = l4;
  }
  return m;
}

template <typename T>
Tensor<T> structure_targets(const LabelMap& labels) {
  validate_labels(labels);
  Tensor<T> out(Shape{labels.dim(0), labels.dim(1), 3});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[3 * i + c] = labels[i] == kStructureLabels[c] ? T{1} : T{0};
    }
  }
  return out;
}

SubRegionDice subregion_dice(const SubRegionMasks& predicted, const SubRegionMasks& truth) {
  return {dice_score(predicted.wt, truth.wt), dice_score(predicted.tc, truth.tc),
          dice_score(predicted.et, truth.et)};
}

template double dice_score(const Tensor<float>&, const Tensor<float>&, double);
template double dice_score(const Tensor<double>&, const Tensor<double>&, double);
template double dice_score(const Tensor<std::uint8_t>&, const Tensor<std::uint8_t>&, double);
template double dice_loss(const Tensor<float>&, const Tensor<float>&, double, Tensor<float>*);
template double dice_loss(const Tensor<double>&, const Tensor<double>&, double, Tensor<double>*);
template Mask binarize(const Tensor<float>&, double);
template Mask binarize(const Tensor<double>&, double);
template Tensor<float> structure_targets(const LabelMap&);
template Tensor<double> structure_targets(const LabelMap&);

}  // namespace diunet
