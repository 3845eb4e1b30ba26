#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "diunet/preprocess.hpp"
#include "diunet/train.hpp"

using namespace diunet;

namespace {

Dataset tiny_data(std::size_t count = 12) {
  PhantomSpec s;
  s.count = count;
  s.size = 32;
  s.seed = 3;
  return preprocess_dataset(generate_phantoms(s), 16);
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.depth = 2;
  c.base_filters = 2;
  c.height = c.width = 16;
  return c;
}

TrainConfig tiny_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.base_lr = 3e-3;
  t.seed = 8;
  t.folds = 3;
  return t;
}

}  // namespace

TEST(Adam, ScalarOracle) {
  Parameter<double> w{"w", Tensor<double>(Shape{1}, 1.0)};
  std::vector<Parameter<double>*> params{&w};
  OptimizerState<double> st;
  const double lr = 0.1, g1 = 0.5, g2 = -2.0;
  adam_step<double>(params, {{"w", Tensor<double>(Shape{1}, g1)}}, st, lr);
  // First step: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
  EXPECT_NEAR(w.value[0], 1.0 - lr * g1 / (std::abs(g1) + 1e-8), 1e-15);
  adam_step<double>(params, {{"w", Tensor<double>(Shape{1}, g2)}}, st, lr);
  const double m = 0.9 * 0.1 * g1 + 0.1 * g2;
  const double v = 0.999 * 0.001 * g1 * g1 + 0.001 * g2 * g2;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(w.value[0], 1.0 - lr * g1 / (std::abs(g1) + 1e-8) - lr * mhat / (std::sqrt(vhat) + 1e-8),
              1e-12);
  EXPECT_EQ(st.step, 2u);
}

TEST(Adam, ZeroGradientLeavesWeights) {
  Parameter<double> w{"w", Tensor<double>(Shape{3}, 2.0)};
  std::vector<Parameter<double>*> params{&w};
  OptimizerState<double> st;
  adam_step<double>(params, {{"w", Tensor<double>(Shape{3})}}, st, 0.1);
  adam_step<double>(params, {}, st, 0.1);
  EXPECT_EQ(w.value, Tensor<double>(Shape{3}, 2.0));
}

TEST(Adam, MinimisesQuadratic) {
  Parameter<double> w{"w", Tensor<double>(Shape{2}, std::vector<double>{3.0, -2.0})};
  std::vector<Parameter<double>*> params{&w};
  OptimizerState<double> st;
  double prev = 13.0;
  for (int i = 0; i < 200; ++i) {
    Tensor<double> g(Shape{2}, std::vector<double>{2 * w.value[0], 2 * w.value[1]});
    adam_step<double>(params, {{"w", g}}, st, 0.05);
    const double f = w.value[0] * w.value[0] + w.value[1] * w.value[1];
    if (i < 40) EXPECT_LT(f, prev);
    prev = f;
  }
  EXPECT_LT(prev, 1e-2);
}

TEST(Adam, NonFiniteGradientRejectedBeforeUpdate) {
  Parameter<double> a{"a", Tensor<double>(Shape{1}, 1.0)};
  Parameter<double> b{"b", Tensor<double>(Shape{1}, 1.0)};
  std::vector<Parameter<double>*> params{&a, &b};
  OptimizerState<double> st;
  Gradients<double> g{{"a", Tensor<double>(Shape{1}, 1.0)},
                      {"b", Tensor<double>(Shape{1}, std::numeric_limits<double>::quiet_NaN())}};
  try {
    adam_step<double>(params, g, st, 0.1);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("parameter b"), std::string::npos);
  }
  EXPECT_EQ(a.value[0], 1.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(Schedule, StepDecay) {
  TrainConfig c;
  c.base_lr = 1e-4;
  EXPECT_DOUBLE_EQ(lr_at_epoch(0, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(9, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(10, c), 1e-4 * 0.9);
  EXPECT_NEAR(lr_at_epoch(25, c), 1e-4 * 0.81, 1e-18);
  EXPECT_NEAR(lr_at_epoch(99, c), 1e-4 * std::pow(0.9, 9), 1e-18);
  EXPECT_THROW(lr_at_epoch(-1, c), std::invalid_argument);
}

TEST(TrainConfigCheck, RejectsBadValues) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.threshold = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Training, ZeroLearningRateKeepsWeights) {
  const Dataset d = tiny_data(6);
  Model<float> m(tiny_model(), 2);
  std::vector<Tensor<float>> before;
  for (auto* p : m.parameters()) before.push_back(p->value);
  TrainConfig t = tiny_train(2);
  t.base_lr = 0.0;
  Fold split{{0, 1, 2, 3}, {4, 5}};
  train_model(m, d, split, t);
  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(params[i]->value, before[i]);
}

TEST(Training, LossDecreasesAndHistoryIsComplete) {
  const Dataset d = tiny_data();
  ASSERT_GE(d.samples.size(), 10u);
  Model<float> m(tiny_model(), 2);
  Fold split;
  for (std::size_t i = 0; i < d.samples.size(); ++i) (i < 9 ? split.train : split.validation).push_back(i);
  const auto hist = train_model(m, d, split, tiny_train(12));
  ASSERT_EQ(hist.size(), 12u);
  EXPECT_LT(hist.back().train_loss, hist.front().train_loss);
  for (std::size_t e = 0; e < hist.size(); ++e) {
    EXPECT_EQ(hist[e].epoch, static_cast<int>(e));
    EXPECT_TRUE(std::isfinite(hist[e].dice_label1));
  }
  // Input normalisation comes from the training split.
  const auto st = channel_stats(d, split.train);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(m.input_mean()[c], st.mean[c], 1e-3);
}

TEST(Training, DeterministicForSeed) {
  const Dataset d = tiny_data(8);
  Fold split{{0, 1, 2, 3, 4}, {5, 6, 7}};
  Model<float> a(tiny_model(), 2), b(tiny_model(), 2);
  const auto ha = train_model(a, d, split, tiny_train(2));
  const auto hb = train_model(b, d, split, tiny_train(2));
  for (std::size_t e = 0; e < ha.size(); ++e) EXPECT_EQ(ha[e].train_loss, hb[e].train_loss);
  const std::vector<std::size_t> ids{5, 6};
  EXPECT_EQ(predict_batched(a, d, ids), predict_batched(b, d, ids));
}

TEST(Training, CrossValidationCoversEverySample) {
  const Dataset d = tiny_data(9);
  const auto folds = cross_validate(d, tiny_model(), tiny_train(1), 2);
  ASSERT_EQ(folds.size(), 3u);
  std::size_t images = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    EXPECT_EQ(folds[f].report.fold, f);
    EXPECT_EQ(folds[f].report.images, folds[f].validation_ids.size());
    EXPECT_EQ(folds[f].per_image.size(), folds[f].validation_ids.size());
    images += folds[f].report.images;
  }
  EXPECT_EQ(images, d.samples.size());
  // Scheduling does not change results.
  const auto serial = cross_validate(d, tiny_model(), tiny_train(1), 1);
  for (std::size_t f = 0; f < folds.size(); ++f) EXPECT_EQ(serial[f].report, folds[f].report);
}

TEST(Training, GatherShapes) {
  const Dataset d = tiny_data(4);
  const std::vector<std::size_t> ids{0, 2};
  EXPECT_EQ(gather_images(d, ids).shape(), (Shape{2, 16, 16, 4}));
  EXPECT_EQ(gather_targets(d, ids).shape(), (Shape{2, 16, 16, 3}));
  const std::vector<std::size_t> bad{9};
  EXPECT_THROW(gather_images(d, bad), std::out_of_range);
}
