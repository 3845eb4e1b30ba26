#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <set>

#include "diunet/dataset.hpp"
#include "diunet/io_util.hpp"
#include "diunet/preprocess.hpp"

using namespace diunet;

namespace {

PhantomSpec spec(std::size_t count, std::size_t size = 48) {
  PhantomSpec s;
  s.count = count;
  s.size = size;
  s.seed = 5;
  return s;
}

}  // namespace

TEST(Dataset, EncodeDecodeRoundTrip) {
  const Dataset d = generate_phantoms(spec(4, 32));
  const auto bytes = encode_dataset(d);
  EXPECT_EQ(decode_dataset(bytes), d);

  const auto path = std::filesystem::temp_directory_path() / "diunet_dataset_roundtrip.diud";
  write_dataset(path, d);
  EXPECT_EQ(read_dataset(path), d);
  std::filesystem::remove(path);
}

TEST(Dataset, CorruptContainersRejected) {
  const auto bytes = encode_dataset(generate_phantoms(spec(2, 16)));
  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
  EXPECT_THROW(decode_dataset(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_dataset(trailing), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_dataset(magic), FormatError);
  EXPECT_THROW(read_dataset("/nonexistent/diunet/file.diud"), std::runtime_error);
}

TEST(Dataset, ValidateChecksExtents) {
  Dataset d = generate_phantoms(spec(2, 16));
  d.samples[1].labels = LabelMap(Shape{16, 15});
  EXPECT_THROW(d.validate(), std::exception);
}

TEST(Phantom, DeterministicPerIndex) {
  const Dataset a = generate_phantoms(spec(6));
  const Dataset b = generate_phantoms(spec(6));
  EXPECT_EQ(a, b);
  // Sample i does not depend on how many samples are generated.
  const Dataset c = generate_phantoms(spec(3));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.samples[i], c.samples[i]);
  PhantomSpec other = spec(6);
  other.seed = 6;
  EXPECT_NE(generate_phantoms(other).samples[0], a.samples[0]);
}

TEST(Phantom, StructureAndBackground) {
  const PhantomSpec s = spec(20, 64);
  const Dataset d = generate_phantoms(s);
  ASSERT_EQ(d.samples.size(), 20u);
  EXPECT_EQ(d.channels, 4u);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& smp = d.samples[i];
    const auto g = phantom_geometry(s, i);
    EXPECT_TRUE(has_tumor(smp.labels));
    EXPECT_NO_THROW(validate_labels(smp.labels));
    EXPECT_EQ(smp.meta.grade, g.grade);
    for (std::size_t y = 0; y < s.size; ++y)
      for (std::size_t x = 0; x < s.size; ++x) {
        const double cy = y + 0.5, cx = x + 0.5;
        const std::uint8_t l = smp.labels.at(y, x);
        if (!g.brain.contains(cy, cx)) {
          for (std::size_t c = 0; c < 4; ++c) ASSERT_EQ(smp.image.at(y, x, c), 0.0f);
          ASSERT_EQ(l, 0);
        } else {
          for (std::size_t c = 0; c < 4; ++c) ASSERT_GT(smp.image.at(y, x, c), 0.0f);
        }
        if (l == 4) ASSERT_TRUE(g.enhancing.contains(cy, cx));
        if (l == 1) ASSERT_TRUE(g.core.contains(cy, cx));
        if (l != 0) ASSERT_TRUE(g.edema.contains(cy, cx));
      }
  }
}

TEST(Phantom, RasterAreaMatchesEllipse) {
  const PhantomSpec s = spec(10, 128);
  for (std::size_t i = 0; i < s.count; ++i) {
    const auto smp = render_phantom(s, i);
    const auto g = phantom_geometry(s, i);
    std::size_t wt = 0, et = 0;
    for (auto v : smp.labels.data()) {
      wt += v != 0;
      et += v == 4;
    }
    EXPECT_NEAR(wt / g.edema.area(), 1.0, 0.05) << "sample " << i;
    EXPECT_NEAR(et / g.enhancing.area(), 1.0, 0.05) << "sample " << i;
  }
}

TEST(Phantom, EllipseGeometry) {
  Ellipse e{10, 10, 4, 2, std::numbers::pi / 2};
  EXPECT_NEAR(e.area(), std::numbers::pi * 8, 1e-12);
  // Rotated by 90 degrees the long axis lies along x.
  EXPECT_TRUE(e.contains(10, 13.5));
  EXPECT_FALSE(e.contains(13.5, 10));
}

TEST(KFold, PartitionProperties) {
  for (std::size_t n : {10u, 23u, 100u}) {
    const auto folds = kfold_split(n, 10, 42);
    ASSERT_EQ(folds.size(), 10u);
    std::multiset<std::size_t> all;
    for (std::size_t f = 0; f < 10; ++f) {
      const auto& fold = folds[f];
      const std::size_t expect = n / 10 + (f < n % 10 ? 1 : 0);
      EXPECT_EQ(fold.validation.size(), expect);
      EXPECT_EQ(fold.train.size() + fold.validation.size(), n);
      EXPECT_TRUE(std::is_sorted(fold.train.begin(), fold.train.end()));
      std::set<std::size_t> train(fold.train.begin(), fold.train.end());
      for (std::size_t v : fold.validation) EXPECT_FALSE(train.count(v));
      all.insert(fold.validation.begin(), fold.validation.end());
    }
    EXPECT_EQ(all.size(), n);
    EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), n);
  }
  EXPECT_EQ(kfold_split(50, 5, 1)[0].validation, kfold_split(50, 5, 1)[0].validation);
  EXPECT_NE(kfold_split(50, 5, 1)[0].validation, kfold_split(50, 5, 2)[0].validation);
  EXPECT_THROW(kfold_split(5, 10, 1), std::invalid_argument);
  EXPECT_THROW(kfold_split(5, 1, 1), std::invalid_argument);
}
