#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "diunet/preprocess.hpp"
#include "test_util.hpp"

using namespace diunet;
using diunet::testing::random_tensor;

TEST(BoundingBox, TightAroundAnyChannel) {
  Tensor<float> img(Shape{6, 7, 2});
  img.at(1, 5, 0) = 0.3f;
  img.at(4, 2, 1) = -0.1f;
  const auto box = bounding_box(img);
  EXPECT_EQ(box, (BoundingBox{1, 4, 2, 5}));
  const auto c = crop(img, box);
  EXPECT_EQ(c.shape(), (Shape{4, 4, 2}));
  EXPECT_EQ(c.at(0, 3, 0), 0.3f);
  EXPECT_EQ(c.at(3, 0, 1), -0.1f);
  EXPECT_THROW(bounding_box(Tensor<float>(Shape{3, 3, 1})), std::invalid_argument);
  EXPECT_THROW(crop(img, BoundingBox{0, 6, 0, 1}), DimensionError);
}

TEST(Resize, SameSizeIsIdentity) {
  std::mt19937_64 rng(1);
  const auto img = random_tensor<float>({5, 6, 3}, rng);
  EXPECT_EQ(resize_bilinear(img, 5, 6), img);
  LabelMap l(Shape{5, 6});
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<std::uint8_t>(i % 5);
  EXPECT_EQ(resize_nearest(l, 5, 6), l);
}

TEST(Resize, BilinearReproducesRamp) {
  // f(y, x) = 2y + x is reproduced exactly at the clamped source coordinate.
  Tensor<float> img(Shape{4, 4, 1});
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) img.at(y, x, 0) = static_cast<float>(2 * y + x);
  const auto out = resize_bilinear(img, 8, 6);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const double sy = std::clamp((i + 0.5) * 4.0 / 8.0 - 0.5, 0.0, 3.0);
      const double sx = std::clamp((j + 0.5) * 4.0 / 6.0 - 0.5, 0.0, 3.0);
      EXPECT_NEAR(out.at(i, j, 0), 2 * sy + sx, 1e-6);
    }
}

TEST(Resize, NearestKeepsLabelSet) {
  std::mt19937_64 rng(2);
  static constexpr std::uint8_t kValues[4] = {0, 1, 2, 4};
  LabelMap l(Shape{17, 23});
  for (auto& v : l.data()) v = kValues[rng() % 4];
  const auto r = resize_nearest(l, 64, 64);
  for (auto v : r.data()) EXPECT_TRUE(v == 0 || v == 1 || v == 2 || v == 4);
  // Downscale 4 -> 2 picks source indices 1 and 3.
  LabelMap small(Shape{1, 4}, std::vector<std::uint8_t>{0, 1, 2, 4});
  EXPECT_EQ(resize_nearest(small, 1, 2).values(), (std::vector<std::uint8_t>{1, 4}));
}

TEST(Resize, RejectsDegenerateInput) {
  EXPECT_THROW(resize_bilinear(Tensor<float>(Shape{1, 1, 1}), 4, 4), DimensionError);
  EXPECT_THROW(resize_bilinear(Tensor<float>(Shape{3, 3, 1}), 0, 4), DimensionError);
}

TEST(Percentile, NearestRankOracle) {
  std::vector<float> v(100);
  for (int i = 0; i < 100; ++i) v[i] = static_cast<float>(100 - i);  // 100..1
  EXPECT_EQ(percentile_nearest_rank(v, 1.0), 1.0);
  EXPECT_EQ(percentile_nearest_rank(v, 99.0), 99.0);
  EXPECT_EQ(percentile_nearest_rank(v, 0.0), 1.0);
  EXPECT_EQ(percentile_nearest_rank(v, 100.0), 100.0);
  const std::vector<float> five{15, 20, 35, 40, 50};
  EXPECT_EQ(percentile_nearest_rank(five, 30.0), 20.0);
  EXPECT_EQ(percentile_nearest_rank(five, 40.0), 20.0);
  EXPECT_EQ(percentile_nearest_rank(five, 50.0), 35.0);
  EXPECT_THROW(percentile_nearest_rank(std::vector<float>{}, 50.0), std::invalid_argument);
  EXPECT_THROW(percentile_nearest_rank(five, 101.0), std::invalid_argument);
}

TEST(Window, MonotoneAndBounded) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(1000);
  for (auto& x : v) x = n(rng);
  const auto w = window_intensity(v);
  EXPECT_EQ(*std::min_element(w.begin(), w.end()), 0.0f);
  EXPECT_EQ(*std::max_element(w.begin(), w.end()), 255.0f);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); j += 37)
      if (v[i] < v[j]) EXPECT_LE(w[i], w[j]);
  EXPECT_EQ(window_intensity(std::vector<float>(10, 3.0f)), std::vector<float>(10, 0.0f));
}

TEST(Window, ChannelsAreIndependent) {
  Tensor<float> img(Shape{10, 10, 2});
  for (std::size_t i = 0; i < 100; ++i) {
    img[2 * i] = static_cast<float>(i);
    img[2 * i + 1] = 1000.0f + static_cast<float>(i) * 10;
  }
  const auto w = window_channels(img);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_FLOAT_EQ(w[2 * i], w[2 * i + 1]);
}

TEST(Zscore, ZeroMeanUnitStd) {
  std::mt19937_64 rng(4);
  Dataset d;
  d.height = d.width = 4;
  d.channels = 2;
  for (int s = 0; s < 3; ++s) {
    SegmentationSample smp;
    smp.image = random_tensor<float>({4, 4, 2}, rng, 2.0, 9.0);
    smp.labels = LabelMap(Shape{4, 4});
    d.samples.push_back(smp);
  }
  const std::vector<std::size_t> ids{0, 1, 2};
  const auto st = channel_stats(d, ids);
  std::vector<double> sum(2), sq(2);
  for (auto& s : d.samples) {
    const auto z = zscore(s.image, st);
    for (std::size_t i = 0; i < z.size(); ++i) {
      sum[i % 2] += z[i];
      sq[i % 2] += double(z[i]) * z[i];
    }
  }
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(sum[c] / 48, 0.0, 1e-6);
    EXPECT_NEAR(sq[c] / 48, 1.0, 1e-5);
  }
  EXPECT_THROW(zscore(Tensor<float>(Shape{4, 4, 3}), st), DimensionError);
}

TEST(Preprocess, DropsTumourFreeSlices) {
  SegmentationSample s;
  s.image = Tensor<float>(Shape{8, 8, 1});
  for (std::size_t y = 2; y < 6; ++y)
    for (std::size_t x = 1; x < 7; ++x) s.image.at(y, x, 0) = float(y + x);
  s.labels = LabelMap(Shape{8, 8});
  EXPECT_FALSE(preprocess_sample(s, 16).has_value());
  s.labels.at(3, 3) = 2;
  const auto out = preprocess_sample(s, 16);
  ASSERT_TRUE(out.has_value());
  EXPECT_EQ(out->image.shape(), (Shape{16, 16, 1}));
  EXPECT_EQ(out->labels.shape(), (Shape{16, 16}));
  EXPECT_TRUE(has_tumor(out->labels));
  for (float v : out->image.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 255.0f);
  }
}
