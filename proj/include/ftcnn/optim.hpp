#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ftcnn/nn.hpp"
#include "ftcnn/tensor.hpp"

namespace ftcnn {

InitMethod parseInitMethod(std::string_view name);
std::string_view initMethodName(InitMethod method);

inline constexpr double kGaussianInitStddev = 0.01;

/// Fan-in is the product of all extents after the first. Gaussian draws from
/// N(0, 0.01^2); Xavier from N(0, 1/fanIn); MSRA from N(0, 2/fanIn).
Tensor initWeights(const Shape& shape, InitMethod method, std::uint64_t seed);

/// Bias vectors always start at zero whatever the weight initializer.
Tensor initBias(std::size_t length);

struct LearningSchedule {
  double mu = 0.9;
  double gamma = 0.95;
  std::map<std::string, double> alphaPerLayer;
  double biasRateMultiplier = 2.0;
  std::size_t batchSize = 1;
  std::size_t epochLength = 1;

  /// Throws ConfigError when an invariant (0 <= mu < 1, 0 < gamma <= 1,
  /// alpha >= 0, multiplier > 0, positive N and |X|) is violated.
  void validate() const;
};

/// gamma^floor(t * N / |X|) * alpha_layer.
double effectiveRate(const LearningSchedule& sched, std::string_view layer, std::uint64_t t);

struct OptimizerState {
  std::vector<Tensor> weightVelocity;
  std::vector<Tensor> biasVelocity;
  std::uint64_t iteration = 0;

  static OptimizerState zeros(const NetworkState& net);
};

/// One momentum step per trainable layer at the current iteration t:
///   V <- mu V - rate_t * dL/dW,   W <- W + V
/// with the bias rate scaled by biasRateMultiplier. Increments t.
void sgdStep(NetworkState& net, OptimizerState& opt, const Gradients& grads,
             const LearningSchedule& sched);

struct NamedSchedule {
  std::string name;
  LearningSchedule schedule;
};

/// Parses a learning-parameter table, one named configuration per row:
///
///   CNNs | mu | alpha_conv1 | ... | alpha_fc8 | gamma
///   Fine-tuned AlexNet:conv5-fc8 | 0.9 | 0 | ... | 0.01 | 0.95
///
/// An optional `bias_multiplier` column overrides the default of 2. Batch
/// size and epoch length are left at 1 for the caller to fill in.
std::vector<NamedSchedule> parseScheduleTable(std::string_view text);

}  // namespace ftcnn
