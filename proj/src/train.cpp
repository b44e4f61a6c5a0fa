#include <algorithm>
#include <numeric>
#include <random>

#include "ftcnn/error.hpp"
#include "ftcnn/experiment.hpp"
#include "ftcnn/random.hpp"

namespace ftcnn {

Tensor predictSet(const NetworkState& net, const ArchitectureSpec& spec, const LabeledPatchSet& set,
                  std::size_t batchSize) {
  if (set.empty()) throw EvaluationError("cannot predict an empty set");
  if (batchSize == 0) batchSize = 1;
  const std::size_t classes = spec.classCount();
  Tensor out({set.size(), classes});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batchSize) {
    const std::size_t count = std::min(batchSize, set.size() - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = predict(net, spec, set.batch(idx));
    std::copy(probs.values().begin(), probs.values().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * classes));
  }
  return out;
}

double validationAuc(const NetworkState& net, const ArchitectureSpec& spec,
                     const LabeledPatchSet& set) {
  const Tensor probs = predictSet(net, spec, set);
  const std::size_t classes = probs.extent(1);
  if (classes <= 3) {
    const auto records = aggregateGroups(positiveScores(probs), set);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : records) {
      scores.push_back(r.meanScore);
      labels.push_back(r.label != 0 ? 1 : 0);
    }
    return rocAuc(scores, labels);
  }
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> scores(set.size());
  std::vector<int> labels(set.size());
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      scores[i] = probs.at(i, k);
      labels[i] = set.labels[i] == static_cast<int>(k) ? 1 : 0;
      pos += static_cast<std::size_t>(labels[i]);
    }
    if (pos == 0 || pos == set.size()) continue;
    total += rocAuc(scores, labels);
    ++used;
  }
  if (used == 0) throw EvaluationError("validation set holds a single class");
  return total / static_cast<double>(used);
}

TrainResult trainNetwork(NetworkState net, const ArchitectureSpec& spec, const FineTunePlan& plan,
                         LearningSchedule schedule, const LabeledPatchSet& train,
                         const LabeledPatchSet& validation, const TrainOptions& options) {
  if (train.empty()) throw SamplingError("training set is empty");
  if (validation.empty()) throw SamplingError("validation set is empty");
  if (options.maxEpochs == 0) throw ConfigError("maxEpochs must be at least 1");
  checkCompatible(net, spec);
  schedule.epochLength = train.size();
  schedule.validate();
  const auto mask = plan.mask(net);
  auto opt = OptimizerState::zeros(net);

  TrainResult result;
  result.best = net;
  EarlyStopMonitor monitor(options.patience);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> idx;
  for (std::size_t epoch = 0; epoch < options.maxEpochs; ++epoch) {
    std::mt19937_64 rng(deriveSeed(options.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batchSize) {
      const std::size_t count = std::min(schedule.batchSize, order.size() - start);
      idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                 order.begin() + static_cast<std::ptrdiff_t>(start + count));
      const auto labels = train.batchLabels(idx);
      const auto trace = forward(net, spec, train.batch(idx));
      loss += crossEntropyLoss(trace.probs, labels);
      ++batches;
      const auto grads = backward(net, spec, trace, labels, mask);
      sgdStep(net, opt, grads, schedule);
    }
    if (!std::isfinite(loss)) throw NumericalError("training loss diverged");
    result.trainLoss.push_back(loss / static_cast<double>(batches));
    const double auc = validationAuc(net, spec, validation);
    const bool stop = monitor.update(auc);
    if (monitor.bestEpoch() == monitor.epochs()) result.best = net;
    if (stop) break;
  }
  result.validationAuc = monitor.history();
  result.bestEpoch = monitor.bestEpoch();
  result.bestAuc = monitor.bestAuc();
  result.iterations = opt.iteration;
  return result;
}

}  // namespace ftcnn
