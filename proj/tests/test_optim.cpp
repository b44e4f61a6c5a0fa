#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "ftcnn/error.hpp"
#include "ftcnn/optim.hpp"

using namespace ftcnn;

namespace {

double sampleVariance(const Tensor& t) {
  double mean = 0.0;
  for (double v : t.data()) mean += v;
  mean /= static_cast<double>(t.size());
  double ss = 0.0;
  for (double v : t.data()) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(t.size() - 1);
}

// One scalar layer "w" with the given rate.
struct Scalar {
  NetworkState net;
  OptimizerState opt;
  LearningSchedule sched;
};

Scalar scalarProblem(double w0, double alpha, double mu, double gamma = 1.0) {
  Scalar s;
  s.net.layers.push_back({"w", Tensor({1, 1}, w0), Tensor({1}, 0.0)});
  s.opt = OptimizerState::zeros(s.net);
  s.sched.mu = mu;
  s.sched.gamma = gamma;
  s.sched.alphaPerLayer["w"] = alpha;
  return s;
}

Gradients unitGradient() {
  Gradients g;
  g.layers.push_back({"w", Tensor({1, 1}, 1.0), Tensor({1}, 1.0)});
  return g;
}

std::string readFile(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(InitWeights, VarianceMatchesFanIn) {
  // 1000 x 100 gives fanIn = 100 and 1e5 draws.
  const Shape shape{1000, 100};
  EXPECT_NEAR(sampleVariance(initWeights(shape, InitMethod::Xavier, 1)), 0.01, 0.05 * 0.01);
  EXPECT_NEAR(sampleVariance(initWeights(shape, InitMethod::Msra, 2)), 0.02, 0.05 * 0.02);
  EXPECT_NEAR(sampleVariance(initWeights(shape, InitMethod::Gaussian, 3)), 1e-4, 0.05 * 1e-4);
  // Convolution kernels: fanIn = in * kh * kw = 4 * 5 * 5.
  EXPECT_NEAR(sampleVariance(initWeights({1000, 4, 5, 5}, InitMethod::Xavier, 4)), 0.01,
              0.05 * 0.01);
}

TEST(InitWeights, BiasesAreZeroAndNamesParse) {
  const Tensor bias = initBias(17);
  for (double v : bias.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(parseInitMethod("xavier"), InitMethod::Xavier);
  EXPECT_EQ(parseInitMethod("msra"), InitMethod::Msra);
  EXPECT_EQ(parseInitMethod("gaussian"), InitMethod::Gaussian);
  EXPECT_THROW(parseInitMethod("he"), ConfigError);
  EXPECT_EQ(initWeights({3, 4}, InitMethod::Msra, 5), initWeights({3, 4}, InitMethod::Msra, 5));
}

TEST(EffectiveRate, Examples) {
  LearningSchedule s;
  s.gamma = 0.95;
  s.alphaPerLayer["conv1"] = 0.001;
  s.alphaPerLayer["fc8"] = 0.01;
  s.batchSize = 100;
  s.epochLength = 1000;
  EXPECT_EQ(effectiveRate(s, "conv1", 5), 0.001);
  EXPECT_NEAR(effectiveRate(s, "conv1", 25), 0.00090250, 1e-15);
  // First step of the second epoch.
  EXPECT_NEAR(effectiveRate(s, "fc8", 10), 0.0095, 1e-15);
  EXPECT_THROW(effectiveRate(s, "fc9", 0), ConfigError);
}

TEST(EffectiveRate, EpochFloorExact) {
  LearningSchedule s;
  s.gamma = 0.95;
  s.alphaPerLayer["l"] = 0.001;
  s.batchSize = 100;
  s.epochLength = 1000;
  for (std::uint64_t t = 0; t < 200; ++t) {
    EXPECT_EQ(effectiveRate(s, "l", t), std::pow(0.95, static_cast<double>(t / 10)) * 0.001);
  }
}

TEST(EffectiveRate, NonIncreasingInT) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> g(0.5, 1.0);
  std::uniform_int_distribution<std::size_t> n(1, 64), x(1, 500);
  for (int trial = 0; trial < 100; ++trial) {
    LearningSchedule s;
    s.gamma = g(rng);
    s.batchSize = n(rng);
    s.epochLength = x(rng);
    s.alphaPerLayer["l"] = 0.01;
    double prev = effectiveRate(s, "l", 0);
    for (std::uint64_t t = 1; t < 300; ++t) {
      const double cur = effectiveRate(s, "l", t);
      EXPECT_LE(cur, prev);
      prev = cur;
    }
  }
}

TEST(Schedule, ValidateRejectsBadValues) {
  LearningSchedule s;
  s.alphaPerLayer["l"] = 0.001;
  EXPECT_NO_THROW(s.validate());
  auto bad = s;
  bad.mu = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.gamma = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.alphaPerLayer["l"] = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.biasRateMultiplier = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(SgdStep, SingleStep) {
  auto s = scalarProblem(0.5, 0.001, 0.9);
  sgdStep(s.net, s.opt, unitGradient(), s.sched);
  EXPECT_DOUBLE_EQ(s.opt.weightVelocity[0][0], -0.001);
  EXPECT_DOUBLE_EQ(s.net.layers[0].weights[0], 0.5 - 0.001);
  EXPECT_EQ(s.opt.iteration, 1u);
}

TEST(SgdStep, TwoStepsMatchHandUnrolled) {
  auto s = scalarProblem(0.5, 0.001, 0.9);
  sgdStep(s.net, s.opt, unitGradient(), s.sched);
  sgdStep(s.net, s.opt, unitGradient(), s.sched);
  // V1 = -0.001, V2 = 0.9 V1 - 0.001 = -0.0019, W2 = W0 + V1 + V2.
  const double v1 = -0.001;
  const double v2 = 0.9 * v1 - 0.001;
  EXPECT_NEAR(s.net.layers[0].weights[0], 0.5 + v1 + v2, 1e-15);
  EXPECT_NEAR(s.net.layers[0].weights[0], 0.5 - 0.0029, 1e-15);
}

TEST(SgdStep, FrozenLayerIsBitwiseConstant) {
  NetworkState net;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  for (const char* name : {"a", "b"}) {
    Tensor w({4, 3}), b({4});
    for (double& v : w.data()) v = d(rng);
    for (double& v : b.data()) v = d(rng);
    net.layers.push_back({name, w, b});
  }
  const NetworkState before = net;
  auto opt = OptimizerState::zeros(net);
  LearningSchedule sched;
  sched.alphaPerLayer = {{"a", 0.0}, {"b", 0.01}};
  for (int step = 0; step < 1000; ++step) {
    Gradients g = net.zerosLike();
    for (auto& l : g.layers) {
      for (double& v : l.weights.data()) v = d(rng);
      for (double& v : l.bias.data()) v = d(rng);
    }
    sgdStep(net, opt, g, sched);
  }
  EXPECT_EQ(net.layers[0], before.layers[0]);
  EXPECT_NE(net.layers[1], before.layers[1]);
}

TEST(SgdStep, PlainGradientDescentWithoutMomentum) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  NetworkState net;
  Tensor w({3, 2});
  for (double& v : w.data()) v = d(rng);
  net.layers.push_back({"l", w, Tensor({3}, 0.0)});
  auto opt = OptimizerState::zeros(net);
  LearningSchedule sched;
  sched.mu = 0.0;
  sched.gamma = 1.0;
  sched.alphaPerLayer["l"] = 0.05;
  Tensor direct = w;
  for (int step = 0; step < 20; ++step) {
    Gradients g = net.zerosLike();
    for (double& v : g.layers[0].weights.data()) v = d(rng);
    for (std::size_t i = 0; i < direct.size(); ++i) direct[i] -= 0.05 * g.layers[0].weights[i];
    sgdStep(net, opt, g, sched);
    for (std::size_t i = 0; i < direct.size(); ++i) {
      EXPECT_NEAR(net.layers[0].weights[i], direct[i], 1e-14);
    }
  }
}

TEST(SgdStep, BiasMovesAtMultipliedRate) {
  auto s = scalarProblem(0.0, 0.001, 0.9);
  for (int step = 0; step < 5; ++step) sgdStep(s.net, s.opt, unitGradient(), s.sched);
  EXPECT_NEAR(s.net.layers[0].bias[0], 2.0 * s.net.layers[0].weights[0], 1e-15);
  s = scalarProblem(0.0, 0.001, 0.9);
  s.sched.biasRateMultiplier = 3.0;
  sgdStep(s.net, s.opt, unitGradient(), s.sched);
  EXPECT_NEAR(s.net.layers[0].bias[0], 3.0 * s.net.layers[0].weights[0], 1e-15);
}

TEST(SgdStep, ShapeMismatchThrows) {
  auto s = scalarProblem(0.0, 0.001, 0.9);
  Gradients g;
  g.layers.push_back({"w", Tensor({2, 1}, 1.0), Tensor({1}, 1.0)});
  EXPECT_THROW(sgdStep(s.net, s.opt, g, s.sched), OptimizerError);
  EXPECT_THROW(sgdStep(s.net, s.opt, Gradients{}, s.sched), OptimizerError);
}

TEST(ScheduleTable, ParsesRowsAndColumns) {
  auto rows = parseScheduleTable(readFile(FTCNN_SOURCE_DIR "/configs/alexnet_table2.schedule"));
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows[0].name, "Fine-tuned AlexNet:conv1-fc8");
  EXPECT_EQ(rows.back().name, "AlexNet scratch");
  for (const auto& r : rows) {
    EXPECT_EQ(r.schedule.mu, 0.9);
    EXPECT_EQ(r.schedule.gamma, 0.95);
    EXPECT_EQ(r.schedule.biasRateMultiplier, 2.0);
    EXPECT_EQ(r.schedule.alphaPerLayer.size(), 8u);
  }
  EXPECT_EQ(rows[4].schedule.alphaPerLayer.at("conv4"), 0.0);
  EXPECT_EQ(rows[4].schedule.alphaPerLayer.at("conv5"), 0.001);
  EXPECT_EQ(rows[4].schedule.alphaPerLayer.at("fc8"), 0.01);
}

TEST(ScheduleTable, RejectsMalformedRows) {
  EXPECT_THROW(parseScheduleTable("name | mu | alpha_a | gamma\nx | 0.9 | 0.1\n"), ConfigError);
  EXPECT_THROW(parseScheduleTable("name | mu | alpha_a | gamma\nx | 1.5 | 0.1 | 0.9\n"),
               ConfigError);
  EXPECT_THROW(parseScheduleTable("name | mu | alpha_a | gamma\nx | 0.9 | abc | 0.9\n"),
               ConfigError);
  auto custom =
      parseScheduleTable("name | mu | alpha_a | gamma | bias_multiplier\nx | 0.5 | 0.1 | 0.9 | 1\n");
  ASSERT_EQ(custom.size(), 1u);
  EXPECT_EQ(custom[0].schedule.biasRateMultiplier, 1.0);
}
