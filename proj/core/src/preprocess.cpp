#include "diunet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diunet/io_util.hpp"

namespace diunet {

namespace {

struct PlaneDims {
  std::size_t height, width, channels;
};

template <typename T>
PlaneDims plane_dims(const Tensor<T>& t, const char* what) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1), 1};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw DimensionError(std::string(what) + " must be (N, M) or (N, M, D), got " +
                       shape_string(t.shape()));
}

void require_resizable(std::size_t h, std::size_t w, std::size_t th, std::size_t tw) {
  if (h * w <= 1) {
    throw DimensionError("cannot resize a degenerate " + std::to_string(h) + "x" +
                         std::to_string(w) + " image");
  }
  if (th == 0 || tw == 0) throw DimensionError("resize target must be positive");
}

// Half-pixel-centre mapping of output index i onto the input axis.
double source_coord(std::size_t i, std::size_t in, std::size_t out) {
  const double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) /
                       static_cast<double>(out) - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(in - 1));
}

}  // namespace

BoundingBox bounding_box(const Tensor<float>& image) {
  const PlaneDims d = plane_dims(image, "bounding_box input");
  bool found = false;
  BoundingBox box{d.height, 0, d.width, 0};
  for (std::size_t i = 0; i < d.height; ++i) {
    for (std::size_t j = 0; j < d.width; ++j) {
      const float* px = image.raw() + (i * d.width + j) * d.channels;
      if (std::none_of(px, px + d.channels, [](float v) { return v != 0.0f; })) continue;
      found = true;
      box.row0 = std::min(box.row0, i);
      box.row1 = std::max(box.row1, i);
      box.col0 = std::min(box.col0, j);
      box.col1 = std::max(box.col1, j);
    }
  }
  if (!found) throw std::invalid_argument("image is entirely zero; no brain to crop to");
  return box;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& image, const BoundingBox& box) {
  const PlaneDims d = plane_dims(image, "crop input");
  if (box.row0 > box.row1 || box.col0 > box.col1 || box.row1 >= d.height ||
      box.col1 >= d.width) {
    throw DimensionError("crop box does not fit " + shape_string(image.shape()));
  }
  Shape shape = image.shape();
  shape[0] = box.height();
  shape[1] = box.width();
  Tensor<T> out(shape);
  const std::size_t row_len = box.width() * d.channels;
  for (std::size_t i = 0; i < box.height(); ++i) {
    const T* src = image.raw() + ((box.row0 + i) * d.width + box.col0) * d.channels;
    std::copy(src, src + row_len, out.raw() + i * row_len);
  }
  return out;
}

template Tensor<float> crop(const Tensor<float>&, const BoundingBox&);
template Tensor<std::uint8_t> crop(const Tensor<std::uint8_t>&, const BoundingBox&);

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width) {
  const PlaneDims d = plane_dims(image, "resize input");
  require_resizable(d.height, d.width, height, width);
  Shape shape = image.shape();
  shape[0] = height;
  shape[1] = width;
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < height; ++i) {
    const double sy = source_coord(i, d.height, height);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, d.height - 1);
    const double wy = sy - static_cast<double>(y0);
    for (std::size_t j = 0; j < width; ++j) {
      const double sx = source_coord(j, d.width, width);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, d.width - 1);
      const double wx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < d.channels; ++c) {
        auto at = [&](std::size_t y, std::size_t x) {
          return static_cast<double>(image[(y * d.width + x) * d.channels + c]);
        };
        const double top = at(y0, x0) + wx * (at(y0, x1) - at(y0, x0));
        const double bottom = at(y1, x0) + wx * (at(y1, x1) - at(y1, x0));
        out[(i * width + j) * d.channels + c] = static_cast<float>(top + wy * (bottom - top));
      }
    }
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& labels, std::size_t height, std::size_t width) {
  const PlaneDims d = plane_dims(labels, "label resize input");
  require_resizable(d.height, d.width, height, width);
  auto nearest = [](std::size_t i, std::size_t in, std::size_t out) {
    const auto s = static_cast<std::size_t>((static_cast<double>(i) + 0.5) *
                                            static_cast<double>(in) / static_cast<double>(out));
    return std::min(s, in - 1);
  };
  Shape shape = labels.shape();
  shape[0] = height;
  shape[1] = width;
  LabelMap out(shape);
  for (std::size_t i = 0; i < height; ++i) {
    const std::size_t y = nearest(i, d.height, height);
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t x = nearest(j, d.width, width);
      for (std::size_t c = 0; c < d.channels; ++c)
        out[(i * width + j) * d.channels + c] = labels[(y * d.width + x) * d.channels + c];
    }
  }
  return out;
}

bool has_tumor(const LabelMap& labels) {
  return std::any_of(labels.data().begin(), labels.data().end(),
                     [](std::uint8_t v) { return v == 1 || v == 2 || v == 4; });
}

double percentile_nearest_rank(std::span<const float> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
  std::vector<float> sorted(values.begin(), values.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

std::vector<float> window_intensity(std::span<const float> channel) {
  const double lo = percentile_nearest_rank(channel, 1.0);
  const double hi = percentile_nearest_rank(channel, 99.0);
  std::vector<float> out(channel.size(), 0.0f);
  if (!(hi > lo)) return out;
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < channel.size(); ++i) {
    const double v = std::clamp(static_cast<double>(channel[i]), lo, hi);
    out[i] = static_cast<float>((v - lo) * scale);
  }
  return out;
}

Tensor<float> window_channels(const Tensor<float>& image) {
  const PlaneDims d = plane_dims(image, "window input");
  const std::size_t pixels = d.height * d.width;
  Tensor<float> out(image.shape());
  std::vector<float> channel(pixels);
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t p = 0; p < pixels; ++p) channel[p] = image[p * d.channels + c];
    const std::vector<float> mapped = window_intensity(channel);
    for (std::size_t p = 0; p < pixels; ++p) out[p * d.channels + c] = mapped[p];
  }
  return out;
}

ChannelStats channel_stats(const Dataset& dataset, std::span<const std::size_t> ids) {
  if (ids.empty()) throw std::invalid_argument("channel statistics need at least one sample");
  const std::size_t c = dataset.channels;
  std::vector<double> sum(c, 0.0);
  std::size_t count = 0;
  for (std::size_t id : ids) {
    const auto& img = dataset.samples.at(id).image;
    for (std::size_t i = 0; i < img.size(); ++i) sum[i % c] += img[i];
    count += img.size() / c;
  }
  ChannelStats stats;
  stats.mean.resize(c);
  for (std::size_t k = 0; k < c; ++k) stats.mean[k] = sum[k] / static_cast<double>(count);
  std::vector<double> sq(c, 0.0);
  for (std::size_t id : ids) {
    const auto& img = dataset.samples[id].image;
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double dv = img[i] - stats.mean[i % c];
      sq[i % c] += dv * dv;
    }
  }
  stats.std.resize(c);
  for (std::size_t k = 0; k < c; ++k) stats.std[k] = std::sqrt(sq[k] / static_cast<double>(count));
  return stats;
}

Tensor<float> zscore(const Tensor<float>& image, const ChannelStats& stats) {
  const std::size_t c = image.rank() == 0 ? 0 : image.shape().back();
  if (c == 0 || stats.mean.size() != c || stats.std.size() != c) {
    throw DimensionError("z-score statistics have " + std::to_string(stats.mean.size()) +
                         " channels, image is " + shape_string(image.shape()));
  }
  Tensor<float> out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::size_t k = i % c;
    out[i] = static_cast<float>((image[i] - stats.mean[k]) / (stats.std[k] + kZscoreEpsilon));
  }
  return out;
}

std::optional<SegmentationSample> preprocess_sample(const SegmentationSample& sample,
                                                    std::size_t target) {
  const BoundingBox box = bounding_box(sample.image);
  Tensor<float> image = resize_bilinear(crop(sample.image, box), target, target);
  LabelMap labels = resize_nearest(crop(sample.labels, box), target, target);
  if (!has_tumor(labels)) return std::nullopt;
  SegmentationSample out;
  out.image = window_channels(image);
  out.labels = std::move(labels);
  out.meta = sample.meta;
  return out;
}

Dataset preprocess_dataset(const Dataset& dataset, std::size_t target) {
  dataset.validate();
  std::vector<std::optional<SegmentationSample>> results(dataset.samples.size());
  parallel_for(results.size(), worker_count(), [&](std::size_t i) {
    try {
      results[i] = preprocess_sample(dataset.samples[i], target);
    } catch (const std::exception& e) {
      throw std::runtime_error("sample " + std::to_string(i) + " (" +
                               dataset.samples[i].meta.patient_id + "): " + e.what());
    }
  });
  Dataset out;
  out.height = out.width = target;
  out.channels = dataset.channels;
  for (auto& r : results) {
    if (r) out.samples.push_back(std::move(*r));
  }
  return out;
}

}  // namespace diunet
