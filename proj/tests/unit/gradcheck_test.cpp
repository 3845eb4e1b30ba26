#include <gtest/gtest.h>

#include <random>

#include "diunet/gradcheck.hpp"
#include "diunet/preprocess.hpp"
#include "diunet/train.hpp"
#include "test_util.hpp"

using namespace diunet;
using diunet::testing::random_tensor;

TEST(Gradcheck, DetectsWrongGradient) {
  // A node whose backward is deliberately off by a factor of two.
  Parameter<double> w{"layer.w", Tensor<double>(Shape{4}, std::vector<double>{1, 2, 3, 4})};
  const LossBuilder loss = [&](Tape<double>& t) {
    const Var x = t.parameter(w);
    Tensor<double> sq(Shape{4});
    for (std::size_t i = 0; i < 4; ++i) sq[i] = t.value(x)[i] * t.value(x)[i];
    const Var y = t.record(std::move(sq), {x}, [](const Tape<double>& tape, const Tensor<double>& g,
                                                 const Tape<double>::GradRefs& grads) {
      (void)tape;
      Tensor<double>& gx = *grads[0];
      if (gx.empty()) gx = Tensor<double>(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 4.0 * g[i];  // should be 2x
    });
    return ad::sum(t, y);
  };
  const auto r = gradcheck({&w}, loss);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(Gradcheck, SmallModelPasses) {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.base_filters = 2;
  cfg.height = cfg.width = 8;
  Model<double> m(cfg, 4);
  std::mt19937_64 rng(4);
  const auto x = random_tensor<double>({2, 8, 8, 4}, rng);
  Tensor<double> y(Shape{2, 8, 8, 3});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (i * 7919 % 5) < 2 ? 1.0 : 0.0;
  GradcheckOptions opts;
  opts.coordinates = 12;
  const auto r = gradcheck_model(m, x, y, opts);
  EXPECT_TRUE(r.pass) << "max relative error " << r.max_rel_error;
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.tensors.size(), m.parameters().size());
  for (const auto& t : r.tensors) EXPECT_EQ(t.dropped, 0u) << t.name;
  ASSERT_FALSE(r.layers.empty());
  EXPECT_EQ(r.layers.front().layer, "down0.b0.reduce.conv");
}
