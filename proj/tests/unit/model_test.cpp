#include <gtest/gtest.h>

#include <random>
#include <set>

#include "diunet/model.hpp"
#include "test_util.hpp"

using namespace diunet;
using diunet::testing::random_tensor;

namespace {

std::size_t module_params(std::size_t in, std::size_t c, const std::vector<std::size_t>& ks) {
  std::size_t n = 0;
  for (std::size_t k : ks) {
    n += in * c + c + 2 * c;         // 1x1 reduce conv + batch norm
    n += k * k * c * c + c + 2 * c;  // spatial conv + batch norm
  }
  return n;
}

// Hand-derived count from the architecture description.
std::size_t closed_form(const ModelConfig& cfg) {
  const std::vector<std::size_t> ks =
      cfg.variant == Variant::Dilated ? std::vector<std::size_t>{3, 3, 3} : std::vector<std::size_t>{1, 3, 5};
  const auto filters = [&](int level) { return static_cast<std::size_t>(cfg.base_filters) << level; };
  std::size_t n = 0, in = static_cast<std::size_t>(cfg.channels);
  for (int i = 0; i < cfg.depth; ++i) {
    n += module_params(in, filters(i), ks);
    in = 3 * filters(i);
  }
  n += module_params(in, filters(cfg.depth), ks);
  in = 3 * filters(cfg.depth);
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const std::size_t skip = 3 * filters(i);
    n += in * skip + skip;
    n += module_params(2 * skip, filters(i), ks);
    in = 3 * filters(i);
  }
  return n + in * static_cast<std::size_t>(cfg.classes) + static_cast<std::size_t>(cfg.classes);
}

ModelConfig small(Variant v) {
  ModelConfig c;
  c.depth = 2;
  c.base_filters = 2;
  c.height = c.width = 8;
  c.variant = v;
  return c;
}

}  // namespace

TEST(Layers, PointwiseConvParameterCount) {
  Rng rng(1);
  ConvLayer<float> conv("c", DilatedConvSpec{1, 1, 4, 3}, rng);
  EXPECT_EQ(conv.parameter_count(), 15u);
}

TEST(Layers, HeInitScale) {
  Rng rng(2);
  const auto w = he_init<double>({3, 3, 64, 64}, 9 * 64, rng);
  double s2 = 0;
  for (double v : w.data()) s2 += v * v;
  EXPECT_NEAR(std::sqrt(s2 / w.size()), std::sqrt(2.0 / (9 * 64)), 0.002);
}

TEST(Layers, BatchNormTrainAndInfer) {
  BatchNormLayer<double> bn("bn", 1);
  Tensor<double> x(Shape{1, 2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  const auto y = batchnorm_forward(x, bn, Phase::Train);
  const double var = 1.25;  // population variance of 1..4
  EXPECT_NEAR(y[0], (1 - 2.5) / std::sqrt(var + 1e-5), 1e-12);
  // running = 0.9 * old + 0.1 * batch, with the unbiased batch variance.
  EXPECT_NEAR(bn.running().mean[0], 0.25, 1e-12);
  EXPECT_NEAR(bn.running().var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
  const auto z = batchnorm_forward(x, bn, Phase::Infer);
  EXPECT_NEAR(z[3], (4 - 0.25) / std::sqrt(bn.running().var[0] + 1e-5), 1e-12);
}

TEST(Inception, BranchGeometry) {
  const auto d = DilatedInceptionSpec::dilated(4);
  ASSERT_EQ(d.branches.size(), 3u);
  for (int j = 0; j < 3; ++j) {
    EXPECT_EQ(d.branches[j].kernel_size, 3);
    EXPECT_EQ(d.branches[j].dilation, j + 1);
  }
  const auto b = DilatedInceptionSpec::baseline(4);
  EXPECT_EQ(b.branches[0].kernel_size, 1);
  EXPECT_EQ(b.branches[1].kernel_size, 3);
  EXPECT_EQ(b.branches[2].kernel_size, 5);
  EXPECT_EQ(d.out_channels(), 12);
}

TEST(Inception, OutputShapeAndCount) {
  Rng rng(3);
  auto m = build_inception_module<double>(DilatedInceptionSpec::dilated(4), 5, rng);
  std::mt19937_64 gen(3);
  Tape<double> tape;
  const Var y = m.forward(tape, tape.constant(random_tensor<double>({2, 6, 6, 5}, gen)), {});
  EXPECT_EQ(tape.value(y).shape(), (Shape{2, 6, 6, 12}));
  EXPECT_EQ(m.parameter_count(), module_params(5, 4, {3, 3, 3}));
}

TEST(Model, ParameterCountClosedForm) {
  for (Variant v : {Variant::Dilated, Variant::Baseline}) {
    for (auto cfg : {small(v), ModelConfig::desk_scale(v), ModelConfig::paper_scale(v)}) {
      Model<float> m(cfg, 1);
      EXPECT_EQ(count_params(m), closed_form(cfg)) << to_string(v) << " depth " << cfg.depth;
    }
  }
}

TEST(Model, DilatedHasFewerParameters) {
  for (auto make : {&ModelConfig::desk_scale, &ModelConfig::paper_scale}) {
    Model<float> d(make(Variant::Dilated), 1);
    Model<float> b(make(Variant::Baseline), 1);
    EXPECT_LT(count_params(d), count_params(b));
  }
}

TEST(Model, OutputShapeAndRange) {
  for (Variant v : {Variant::Dilated, Variant::Baseline}) {
    Model<float> m(small(v), 4);
    const Tensor<float> zeros(Shape{2, 8, 8, 4});
    const auto y = m.predict(zeros);
    ASSERT_EQ(y.shape(), (Shape{2, 8, 8, 3}));
    for (float p : y.data()) {
      EXPECT_GT(p, 0.0f);
      EXPECT_LT(p, 1.0f);
    }
    EXPECT_EQ(m.predict(Tensor<float>(Shape{8, 8, 4})).shape(), (Shape{8, 8, 3}));
  }
}

TEST(Model, DeterministicForSeed) {
  std::mt19937_64 gen(5);
  const auto x = random_tensor<float>({1, 8, 8, 4}, gen);
  Model<float> a(small(Variant::Dilated), 9), b(small(Variant::Dilated), 9),
      c(small(Variant::Dilated), 10);
  EXPECT_EQ(a.predict(x), b.predict(x));
  EXPECT_NE(a.predict(x), c.predict(x));
}

TEST(Model, UniqueParameterNames) {
  Model<float> m(small(Variant::Dilated), 1);
  std::set<std::string> names;
  for (auto* p : m.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  for (auto& b : m.buffers()) EXPECT_TRUE(names.insert(b.name).second) << b.name;
}

TEST(Model, ConfigValidation) {
  ModelConfig c = small(Variant::Dilated);
  c.height = 10;  // not divisible by 4
  EXPECT_THROW(Model<float>(c, 1), std::invalid_argument);
  c = small(Variant::Dilated);
  c.depth = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  Model<float> m(small(Variant::Dilated), 1);
  EXPECT_THROW(m.predict(Tensor<float>(Shape{1, 8, 8, 3})), DimensionError);
  Tape<float> tape;
  EXPECT_THROW(m.forward(tape, tape.constant(Tensor<float>(Shape{1, 16, 8, 4})), {}),
               DimensionError);
  EXPECT_THROW(parse_variant("wide"), std::invalid_argument);
}
