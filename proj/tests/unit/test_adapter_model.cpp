#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "fitbd/adapter_model.hpp"
#include "fitbd/error.hpp"
#include "test_util.hpp"

namespace fitbd {
namespace {

using test::random_values;

AdapterModel zero_model(std::size_t v, std::size_t c, std::size_t r) {
  return AdapterModel(v, c, r, std::vector<double>(c * v, 0.0), std::vector<double>(r * v, 0.0),
                      std::vector<double>(c * r, 0.0), std::vector<double>(c, 0.0));
}

AdapterModel random_model(Rng& rng, std::size_t v, std::size_t c, std::size_t r) {
  return AdapterModel(v, c, r, random_values(rng, c * v, 1.0), random_values(rng, r * v, 1.0),
                      random_values(rng, c * r, 1.0), random_values(rng, c, 1.0));
}

FeatureVector random_features(Rng& rng, std::size_t v) {
  std::vector<double> x(v);
  for (double& e : x) e = rng.uniform();
  return FeatureVector(std::move(x));
}

TEST(FeatureVector, CountsOverLength) {
  const LabeledExample ex{{2, 0, 2, 3}, 1, false};
  const FeatureVector f = FeatureVector::encode(ex, 5);
  const std::vector<double> expect{0.25, 0.0, 0.5, 0.25, 0.0};
  EXPECT_EQ(std::vector<double>(f.values().begin(), f.values().end()), expect);
  EXPECT_EQ(std::vector<std::uint32_t>(f.support().begin(), f.support().end()),
            (std::vector<std::uint32_t>{0, 2, 3}));
  EXPECT_THROW(FeatureVector::encode(LabeledExample{{5}, 0, false}, 5), Error);
}

TEST(Softmax, StableAndArgmaxTies) {
  const std::vector<double> big{1000.0, 1000.0};
  const auto p = softmax(big);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  const std::vector<double> tie{0.1, 0.3, 0.3};
  EXPECT_EQ(argmax(tie), 1u);
}

TEST(AdapterModel, ZeroModelIsUniform) {
  const AdapterModel m = zero_model(6, 4, 2);
  Rng rng(1);
  const FeatureVector x = random_features(rng, 6);
  for (double p : m.forward(x)) EXPECT_DOUBLE_EQ(p, 0.25);
  const std::vector<TrainingPair> batch{{x, 2}};
  EXPECT_NEAR(batch_loss(m, batch), std::log(4.0), 1e-12);
}

TEST(AdapterModel, LargeBiasDominates) {
  std::vector<double> bias{0.0, 0.0, 20.0};
  const AdapterModel m(4, 3, 1, std::vector<double>(12, 0.0), std::vector<double>(4, 0.0),
                       std::vector<double>(3, 0.0), bias);
  Rng rng(2);
  EXPECT_GT(m.forward(random_features(rng, 4))[2], 0.999);
}

TEST(AdapterModel, LogitsBruteForce) {
  Rng rng(3);
  const std::size_t V = 7, C = 4, R = 2;
  const AdapterModel m = random_model(rng, V, C, R);
  const FeatureVector x = random_features(rng, V);
  const auto got = m.logits(x);
  for (std::size_t c = 0; c < C; ++c) {
    double z = m.bias()[c];
    for (std::size_t v = 0; v < V; ++v) {
      double w = m.base()[c * V + v];
      for (std::size_t k = 0; k < R; ++k) w += m.b()[c * R + k] * m.a()[k * V + v];
      z += w * x.values()[v];
    }
    EXPECT_NEAR(got[c], z, 1e-12);
  }
}

TEST(AdapterModel, RankChecks) {
  Rng rng(4);
  try {
    AdapterModel::init(10, 3, 4, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRankTooLarge);
  }
  const AdapterModel m = AdapterModel::init(10, 3, 3, rng);
  EXPECT_EQ(m.adapter_dim(), 3u * 3 + 3 * 10 + 3);
  for (double b : m.b()) EXPECT_EQ(b, 0.0);
  for (double w : m.base()) EXPECT_LE(std::abs(w), 0.01);
}

TEST(AdapterModel, FlattenApplyRoundTrip) {
  Rng rng(5);
  const AdapterModel m = random_model(rng, 5, 3, 2);
  const FlatVector flat = m.flatten_adapter();
  ASSERT_EQ(flat.dim(), m.adapter_dim());
  EXPECT_EQ(flat[0], m.b()[0]);
  EXPECT_EQ(flat[6], m.a()[0]);
  EXPECT_EQ(flat[16], m.bias()[0]);
  const AdapterModel z = zero_model(5, 3, 2);
  const AdapterModel rebuilt(5, 3, 2, m.base(), z.a(), z.b(), z.bias());
  EXPECT_EQ(rebuilt.apply_update(flat), m);
  EXPECT_THROW(m.apply_update(FlatVector::zeros(3)), Error);
}

TEST(LossAndGrad, BiasGradientClosedForm) {
  // with B = 0, dL/dbias = mean(p - onehot) and dL/dA = 0
  Rng rng(6);
  const AdapterModel m = AdapterModel::init(6, 3, 2, rng);
  std::vector<TrainingPair> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({random_features(rng, 6), i % 3});
  const LossAndGrad lg = loss_and_grad(m, batch);
  std::vector<double> expect(3, 0.0);
  double loss = 0.0;
  for (const auto& [x, y] : batch) {
    const auto p = m.forward(x);
    loss -= std::log(p[static_cast<std::size_t>(y)]);
    for (std::size_t c = 0; c < 3; ++c) expect[c] += (p[c] - (static_cast<int>(c) == y)) / 5.0;
  }
  EXPECT_NEAR(lg.loss, loss / 5.0, 1e-12);
  for (std::size_t k = 6; k < 6 + 12; ++k) EXPECT_EQ(lg.grad[k], 0.0);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(lg.grad[18 + c], expect[c], 1e-12);
}

TEST(LossAndGrad, DuplicatedBatchIsTheSame) {
  Rng rng(7);
  const AdapterModel m = random_model(rng, 6, 3, 2);
  std::vector<TrainingPair> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({random_features(rng, 6), i % 3});
  std::vector<TrainingPair> twice = batch;
  twice.insert(twice.end(), batch.begin(), batch.end());
  const auto a = loss_and_grad(m, batch), b = loss_and_grad(m, twice);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  for (std::size_t k = 0; k < a.grad.dim(); ++k) EXPECT_NEAR(a.grad[k], b.grad[k], 1e-12);
  EXPECT_NEAR(batch_loss(m, batch), a.loss, 1e-12);
  const std::vector<TrainingPair> empty;
  EXPECT_THROW(loss_and_grad(m, empty), Error);
}

TEST(SgdStep, LinearInLearningRate) {
  Rng rng(8);
  const AdapterModel m = random_model(rng, 5, 3, 2);
  const FlatVector g(random_values(rng, m.adapter_dim(), 1.0));
  EXPECT_EQ(sgd_step(m, g, 0.0), m);
  const FlatVector base = m.flatten_adapter();
  const FlatVector d1 = sgd_step(m, g, 0.5).flatten_adapter() - base;
  const FlatVector d2 = sgd_step(m, g, 1.0).flatten_adapter() - base;
  for (std::size_t k = 0; k < g.dim(); ++k) {
    EXPECT_NEAR(d2[k], 2.0 * d1[k], 1e-12);
    EXPECT_NEAR(d2[k], -g[k], 1e-12);
  }
  EXPECT_EQ(sgd_step(m, base, 1.0).flatten_adapter(), FlatVector::zeros(base.dim()));
  EXPECT_EQ(sgd_step(m, g, 0.3).base(), m.base());
  EXPECT_THROW(sgd_step(m, g, -1.0), Error);
}

TEST(SgdStep, LossFallsOnSeparableData) {
  Rng rng(9);
  AdapterModel m = AdapterModel::init(4, 2, 1, rng);
  const std::vector<TrainingPair> batch{{FeatureVector({1.0, 0.0, 0.0, 0.0}), 0},
                                        {FeatureVector({0.0, 1.0, 0.0, 0.0}), 1},
                                        {FeatureVector({0.5, 0.0, 0.5, 0.0}), 0},
                                        {FeatureVector({0.0, 0.5, 0.0, 0.5}), 1}};
  double previous = batch_loss(m, batch);
  for (int step = 0; step < 50; ++step) {
    m = sgd_step(m, loss_and_grad(m, batch).grad, 0.1);
    const double now = batch_loss(m, batch);
    EXPECT_LT(now, previous);
    previous = now;
  }
}

TEST(Checkpoint, RoundTripAndTruncation) {
  Rng rng(10);
  const AdapterModel m = random_model(rng, 9, 4, 3);
  std::stringstream buf;
  save_checkpoint(buf, m);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.size(), 3 * 8 + 8 * (36 + 12 + 27 + 4));
  EXPECT_EQ(load_checkpoint(buf), m);
  std::istringstream cut(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(cut), Error);
}

TEST(Predict, BatchMatchesSingle) {
  Rng rng(11);
  const AdapterModel m = random_model(rng, 8, 5, 2);
  std::vector<FeatureVector> xs;
  for (int i = 0; i < 20; ++i) xs.push_back(random_features(rng, 8));
  const auto batch = predict(m, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_EQ(batch[i], predict(m, xs[i]));
    EXPECT_EQ(batch[i], static_cast<int>(argmax(m.logits(xs[i]))));
  }
}

}  // namespace
}  // namespace fitbd
