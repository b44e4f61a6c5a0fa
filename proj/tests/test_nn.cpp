#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ftcnn/error.hpp"
#include "ftcnn/nn.hpp"
#include "gradcheck.hpp"

using namespace ftcnn;
using ftcnn::testing::dot;
using ftcnn::testing::maxRelativeError;
using ftcnn::testing::numericGradient;
using ftcnn::testing::randomTensor;

namespace {

// AlexNet rows with the output column as printed; C = 2.
constexpr const char* kAlexNetTable = R"(
layer | type | input | kernel | stride | pad | output
data  | input           | 3x227x227 | N/A   | N/A | N/A | 3x227x227
conv1 | convolution     | 3x227x227 | 11x11 | 4   | 0   | 96x55x55
pool1 | max pooling     | 96x55x55  | 3x3   | 2   | 0   | 96x27x27
conv2 | convolution     | 96x27x27  | 5x5   | 1   | 2   | 256x27x27
pool2 | max pooling     | 256x27x27 | 3x3   | 2   | 0   | 256x13x13
conv3 | convolution     | 256x13x13 | 3x3   | 1   | 1   | 384x13x13
conv4 | convolution     | 384x13x13 | 3x3   | 1   | 1   | 384x13x13
conv5 | convolution     | 384x13x13 | 3x3   | 1   | 1   | 256x13x13
pool5 | max pooling     | 256x13x13 | 3x3   | 2   | 0   | 256x6x6
fc6   | fully connected | 256x6x6   | 6x6   | 1   | 0   | 4096x1
fc7   | fully connected | 4096x1    | 1x1   | 1   | 0   | 4096x1
fc8   | fully connected | 4096x1    | 1x1   | 1   | 0   | Cx1
)";

ArchitectureSpec tinySpec() {
  return ArchitectureBuilder({2, 6, 6})
      .conv("conv1", 3, {3, 3}, 1, 1)
      .maxPool("pool1", {2, 2}, 2)
      .fullyConnected("fc2", 5)
      .fullyConnected("fc3", 3)
      .build();
}

}  // namespace

TEST(InferShapes, AlexNetRows) {
  auto spec = parseArchitectureTable(kAlexNetTable, 2);
  auto shapes = inferShapes(spec);
  ASSERT_EQ(shapes.size(), 12u);
  EXPECT_EQ(shapes[1], (Shape{96, 55, 55}));
  EXPECT_EQ(shapes[2], (Shape{96, 27, 27}));
  EXPECT_EQ(shapes[5], (Shape{384, 13, 13}));
  EXPECT_EQ(shapes[8], (Shape{256, 6, 6}));
  EXPECT_EQ(shapes[11], (Shape{2, 1}));
  EXPECT_EQ(spec, alexnetSpec(2));
}

TEST(InferShapes, ConfigFileMatchesBuiltin) {
  auto spec = loadArchitecture(FTCNN_SOURCE_DIR "/configs/alexnet.arch", 3);
  EXPECT_EQ(spec, alexnetSpec(3));
  EXPECT_EQ(parseArchitectureTable(formatArchitectureTable(spec)), spec);
}

TEST(InferShapes, RejectsBadTables) {
  // Declared output disagrees with the formula.
  EXPECT_THROW(parseArchitectureTable(R"(
layer | type | input | kernel | stride | pad | output
data | input | 3x8x8 | N/A | N/A | N/A | 3x8x8
conv1 | convolution | 3x8x8 | 3x3 | 1 | 0 | 4x7x7
fc | fully connected | 4x7x7 | 7x7 | 1 | 0 | 2x1
)"),
               ArchitectureError);
  // Kernel larger than the padded input.
  EXPECT_THROW(ArchitectureBuilder({1, 2, 2}).conv("c", 1, {5, 5}).build(), ArchitectureError);
  // Class symbol without a class count.
  EXPECT_THROW(parseArchitectureTable(kAlexNetTable), ArchitectureError);
  // Input column that does not chain.
  EXPECT_THROW(parseArchitectureTable(R"(
layer | type | input | kernel | stride | pad | output
data | input | 3x8x8 | N/A | N/A | N/A | 3x8x8
fc | fully connected | 3x9x9 | 9x9 | 1 | 0 | 2x1
)"),
               ArchitectureError);
}

TEST(BuildNetwork, AlexNetLayers) {
  auto net = buildNetwork(alexnetSpec(2), InitMethod::Gaussian, 1);
  ASSERT_EQ(net.layers.size(), 8u);
  EXPECT_EQ(net.layers.front().name, "conv1");
  EXPECT_EQ(net.layers.front().weights.shape(), (Shape{96, 3, 11, 11}));
  EXPECT_EQ(net.layer("fc6").weights.shape(), (Shape{4096, 9216}));
  EXPECT_EQ(net.layers.back().weights.shape(), (Shape{2, 4096}));
}

TEST(BuildNetwork, ThreeClassHead) {
  auto spec = alexnetSpec(3);
  // Only the head shape matters here; build the table, not the 60M weights.
  EXPECT_EQ(*spec.row("fc8").outChannels, 3u);
  auto ops = compileOps(spec);
  EXPECT_EQ(ops.back().in, (Shape{3, 1}));
}

TEST(BuildNetwork, DeterministicForSeed) {
  auto a = buildNetwork(tinySpec(), InitMethod::Msra, 42);
  auto b = buildNetwork(tinySpec(), InitMethod::Msra, 42);
  auto c = buildNetwork(tinySpec(), InitMethod::Msra, 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(CompileOps, ImplicitReluAfterAllButHead) {
  auto ops = compileOps(alexnetSpec(2));
  std::size_t relus = 0;
  for (const auto& op : ops) relus += op.kind == LayerKind::Relu;
  EXPECT_EQ(relus, 7u);
  EXPECT_EQ(ops.back().kind, LayerKind::Softmax);
  EXPECT_EQ(ops[ops.size() - 2].kind, LayerKind::FullyConnected);
}

TEST(Forward, SymmetricHeadGivesUniform) {
  auto spec = ArchitectureBuilder({1, 1, 1}).fullyConnected("fc", 2).build();
  auto net = buildNetwork(spec, InitMethod::Gaussian, 0);
  net.layers[0].weights.fill(0.0);
  auto trace = forward(net, spec, Tensor({1, 1, 1, 1}, 3.0));
  EXPECT_DOUBLE_EQ(trace.probs.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(trace.probs.at(0, 1), 0.5);
}

TEST(Forward, MaxPoolPicksMaximum) {
  auto x = Tensor::fromList({1, 1, 2, 2}, {1, 2, 4, 3});
  auto r = layers::maxPoolForward(x, {2, 2}, 2, 0);
  EXPECT_EQ(r.y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(r.y[0], 4.0);
  EXPECT_EQ(r.argmax[0], 2u);
}

TEST(Forward, ConvolutionMatchesSlidingWindow) {
  Tensor ramp({1, 1, 5, 5});
  for (std::size_t i = 0; i < 25; ++i) ramp[i] = static_cast<double>(i);
  Tensor w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;  // identity-like kernel
  w.at(0, 0, 0, 2) = 0.5;
  Tensor b = Tensor::fromList({1}, {0.25});
  auto y = layers::convForward(ramp, w, b, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (std::size_t oy = 0; oy < 3; ++oy) {
    for (std::size_t ox = 0; ox < 3; ++ox) {
      double expect = 0.25;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          expect += w.at(0, 0, ky, kx) * ramp.at(0, 0, oy + ky, ox + kx);
        }
      }
      EXPECT_DOUBLE_EQ(y.at(0, 0, oy, ox), expect);
      EXPECT_DOUBLE_EQ(y.at(0, 0, oy, ox), ramp.at(0, 0, oy + 1, ox + 1) +
                                               0.5 * ramp.at(0, 0, oy, ox + 2) + 0.25);
    }
  }
}

TEST(Forward, StridedPaddedConvolutionMatchesBruteForce) {
  std::mt19937_64 rng(3);
  for (std::size_t stride : {1u, 2u, 3u}) {
    for (std::size_t pad : {0u, 1u, 2u}) {
      auto x = randomTensor({2, 3, 7, 6}, rng);
      auto w = randomTensor({4, 3, 3, 2}, rng);
      auto b = randomTensor({4}, rng);
      auto y = layers::convForward(x, w, b, stride, pad);
      const std::size_t oh = (7 + 2 * pad - 3) / stride + 1, ow = (6 + 2 * pad - 2) / stride + 1;
      ASSERT_EQ(y.shape(), (Shape{2, 4, oh, ow}));
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t o = 0; o < 4; ++o)
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              double s = b[o];
              for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t ky = 0; ky < 3; ++ky)
                  for (std::size_t kx = 0; kx < 2; ++kx) {
                    long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                    long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                    if (iy < 0 || ix < 0 || iy >= 7 || ix >= 6) continue;
                    s += w.at(o, c, ky, kx) * x.at(n, c, iy, ix);
                  }
              EXPECT_NEAR(y.at(n, o, oy, ox), s, 1e-12);
            }
    }
  }
}

TEST(Forward, RejectsWrongBatchShape) {
  auto spec = tinySpec();
  auto net = buildNetwork(spec, InitMethod::Gaussian, 0);
  EXPECT_THROW(forward(net, spec, Tensor({1, 2, 5, 6})), InferenceError);
}

TEST(Forward, Deterministic) {
  auto spec = tinySpec();
  auto net = buildNetwork(spec, InitMethod::Xavier, 9);
  std::mt19937_64 rng(1);
  auto batch = randomTensor({4, 2, 6, 6}, rng);
  auto a = forward(net, spec, batch);
  auto b = forward(net, spec, batch);
  EXPECT_EQ(a.activations, b.activations);
  EXPECT_EQ(predict(net, spec, batch), a.probs);
}

TEST(Softmax, StableForHugeLogits) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor logits({3, 5});
    for (double& v : logits.data()) v = u(rng);
    auto p = layers::softmaxForward(logits);
    for (std::size_t n = 0; n < 3; ++n) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        ASSERT_TRUE(std::isfinite(p.at(n, c)));
        s += p.at(n, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(CrossEntropy, Examples) {
  auto uniform = Tensor::fromList({1, 2}, {0.5, 0.5});
  EXPECT_NEAR(crossEntropyLoss(uniform, std::vector<int>{1}), 0.693147, 1e-6);
  auto perfect = Tensor::fromList({1, 2}, {1.0, 0.0});
  EXPECT_EQ(crossEntropyLoss(perfect, std::vector<int>{0}), 0.0);
  auto batch = Tensor::fromList({2, 2}, {0.9, 0.1, 0.2, 0.8});
  const double expected = -(std::log(0.9) + std::log(0.8)) / 2.0;
  EXPECT_NEAR(crossEntropyLoss(batch, std::vector<int>{0, 1}), expected, 1e-15);
  EXPECT_NEAR(expected, 0.164252, 1e-6);
}

TEST(CrossEntropy, ClampsZeroProbability) {
  auto wrong = Tensor::fromList({1, 2}, {1.0, 0.0});
  EXPECT_NEAR(crossEntropyLoss(wrong, std::vector<int>{1}), -std::log(1e-12), 1e-9);
  EXPECT_THROW(crossEntropyLoss(wrong, std::vector<int>{2}), InferenceError);
}

// ---- gradient checks per layer kind, projected onto a random direction ----

class LayerGradient : public ::testing::TestWithParam<int> {};

TEST_P(LayerGradient, Convolution) {
  std::mt19937_64 rng(GetParam());
  const std::size_t stride = 1 + GetParam() % 2, pad = GetParam() % 3;
  auto x = randomTensor({2, 2, 6, 5}, rng);
  auto w = randomTensor({3, 2, 3, 3}, rng);
  auto b = randomTensor({3}, rng);
  auto y = layers::convForward(x, w, b, stride, pad);
  auto r = randomTensor(y.shape(), rng);
  Tensor dx, dw(w.shape()), db(b.shape());
  layers::convBackward(x, w, stride, pad, r, &dx, &dw, &db);
  auto fx = [&](const Tensor& v) { return dot(r, layers::convForward(v, w, b, stride, pad)); };
  auto fw = [&](const Tensor& v) { return dot(r, layers::convForward(x, v, b, stride, pad)); };
  auto fb = [&](const Tensor& v) { return dot(r, layers::convForward(x, w, v, stride, pad)); };
  EXPECT_LT(maxRelativeError(dx, numericGradient(fx, x)), 1e-4);
  EXPECT_LT(maxRelativeError(dw, numericGradient(fw, w)), 1e-4);
  EXPECT_LT(maxRelativeError(db, numericGradient(fb, b)), 1e-4);
}

TEST_P(LayerGradient, MaxPool) {
  std::mt19937_64 rng(GetParam());
  auto x = randomTensor({2, 2, 6, 6}, rng);
  const std::size_t stride = 1 + GetParam() % 2;
  auto fwd = layers::maxPoolForward(x, {3, 3}, stride, GetParam() % 2);
  auto r = randomTensor(fwd.y.shape(), rng);
  auto dx = layers::maxPoolBackward(x.shape(), fwd.argmax, r);
  auto f = [&](const Tensor& v) {
    return dot(r, layers::maxPoolForward(v, {3, 3}, stride, GetParam() % 2).y);
  };
  EXPECT_LT(maxRelativeError(dx, numericGradient(f, x)), 1e-4);
}

TEST_P(LayerGradient, FullyConnected) {
  std::mt19937_64 rng(GetParam());
  auto x = randomTensor({3, 2, 2, 2}, rng);
  auto w = randomTensor({4, 8}, rng);
  auto b = randomTensor({4}, rng);
  auto r = randomTensor({3, 4}, rng);
  Tensor dx, dw(w.shape()), db(b.shape());
  layers::denseBackward(x, w, r, &dx, &dw, &db);
  auto fx = [&](const Tensor& v) { return dot(r, layers::denseForward(v, w, b)); };
  auto fw = [&](const Tensor& v) { return dot(r, layers::denseForward(x, v, b)); };
  auto fb = [&](const Tensor& v) { return dot(r, layers::denseForward(x, w, v)); };
  EXPECT_LT(maxRelativeError(dx, numericGradient(fx, x)), 1e-4);
  EXPECT_LT(maxRelativeError(dw, numericGradient(fw, w)), 1e-4);
  EXPECT_LT(maxRelativeError(db, numericGradient(fb, b)), 1e-4);
}

TEST_P(LayerGradient, Relu) {
  std::mt19937_64 rng(GetParam());
  auto x = randomTensor({4, 7}, rng);
  auto r = randomTensor({4, 7}, rng);
  auto dx = layers::reluBackward(x, r);
  auto f = [&](const Tensor& v) { return dot(r, layers::reluForward(v)); };
  EXPECT_LT(maxRelativeError(dx, numericGradient(f, x)), 1e-4);
}

TEST_P(LayerGradient, Softmax) {
  std::mt19937_64 rng(GetParam());
  auto z = randomTensor({3, 4}, rng, 2.0);
  auto r = randomTensor({3, 4}, rng);
  auto dz = layers::softmaxBackward(layers::softmaxForward(z), r);
  auto f = [&](const Tensor& v) { return dot(r, layers::softmaxForward(v)); };
  EXPECT_LT(maxRelativeError(dz, numericGradient(f, z)), 1e-4);
}

TEST_P(LayerGradient, CompositeNetwork) {
  auto spec = tinySpec();
  auto net = buildNetwork(spec, InitMethod::Msra, GetParam());
  std::mt19937_64 rng(GetParam() + 100);
  auto batch = randomTensor({3, 2, 6, 6}, rng);
  std::vector<int> labels{0, 2, 1};
  auto grads = backward(net, spec, forward(net, spec, batch), labels);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      auto loss = [&](const Tensor& v) {
        NetworkState probe = net;
        (which ? probe.layers[l].bias : probe.layers[l].weights) = v;
        return crossEntropyLoss(predict(probe, spec, batch), labels);
      };
      const Tensor& at = which ? net.layers[l].bias : net.layers[l].weights;
      const Tensor& analytic = which ? grads.layers[l].bias : grads.layers[l].weights;
      EXPECT_LT(maxRelativeError(analytic, numericGradient(loss, at)), 1e-4)
          << net.layers[l].name << (which ? " bias" : " weights");
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, LayerGradient, ::testing::Range(1, 21));

TEST(Backward, ZeroLossGivesZeroHeadGradient) {
  auto spec = ArchitectureBuilder({1, 1, 1}).fullyConnected("fc", 2).build();
  auto net = buildNetwork(spec, InitMethod::Gaussian, 0);
  net.layers[0].weights = Tensor::fromList({2, 1}, {1000.0, -1000.0});
  auto batch = Tensor::fromList({2, 1, 1, 1}, {1.0, -1.0});
  std::vector<int> labels{0, 1};
  auto trace = forward(net, spec, batch);
  ASSERT_EQ(trace.probs.at(0, 0), 1.0);
  auto g = backward(net, spec, trace, labels);
  for (double v : g.layers[0].weights.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, DuplicatedBatchLeavesGradientUnchanged) {
  auto spec = tinySpec();
  auto net = buildNetwork(spec, InitMethod::Xavier, 4);
  std::mt19937_64 rng(2);
  auto batch = randomTensor({2, 2, 6, 6}, rng);
  std::vector<int> labels{1, 0};
  auto once = backward(net, spec, forward(net, spec, batch), labels);
  std::vector<Tensor> items{batch.slice(0), batch.slice(1), batch.slice(0), batch.slice(1)};
  std::vector<int> twiceLabels{1, 0, 1, 0};
  auto twice = backward(net, spec, forward(net, spec, stack(items)), twiceLabels);
  for (std::size_t l = 0; l < once.layers.size(); ++l) {
    for (std::size_t i = 0; i < once.layers[l].weights.size(); ++i) {
      EXPECT_NEAR(once.layers[l].weights[i], twice.layers[l].weights[i],
                  1e-12 * (1.0 + std::abs(once.layers[l].weights[i])));
    }
  }
}

TEST(Backward, MaskSkipsFrozenLayers) {
  auto spec = tinySpec();
  auto net = buildNetwork(spec, InitMethod::Xavier, 4);
  std::mt19937_64 rng(2);
  auto batch = randomTensor({2, 2, 6, 6}, rng);
  std::vector<int> labels{1, 0};
  auto trace = forward(net, spec, batch);
  auto full = backward(net, spec, trace, labels);
  std::vector<bool> mask{false, true, true};
  auto masked = backward(net, spec, trace, labels, mask);
  for (double v : masked.layers[0].weights.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(masked.layers[1], full.layers[1]);
  EXPECT_EQ(masked.layers[2], full.layers[2]);
}
