#include "ftcnn/transfer.hpp"

#include <algorithm>

#include "ftcnn/error.hpp"
#include "ftcnn/random.hpp"

namespace ftcnn {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

bool FineTunePlan::trains(std::string_view layer) const {
  return std::find(trainable.begin(), trainable.end(), layer) != trainable.end();
}

std::vector<bool> FineTunePlan::mask(const NetworkState& net) const {
  std::vector<bool> m;
  m.reserve(net.layers.size());
  for (const auto& l : net.layers) m.push_back(trains(l.name));
  return m;
}

NetworkState transferWeights(const NetworkState& src, NetworkState dst) {
  if (src.layers.size() != dst.layers.size() || src.layers.empty()) {
    throw TransferError("source and destination have different layer counts");
  }
  for (std::size_t l = 0; l + 1 < src.layers.size(); ++l) {
    const auto& s = src.layers[l];
    auto& d = dst.layers[l];
    if (s.name != d.name) {
      throw TransferError("layer " + std::to_string(l) + " is '" + s.name + "' in the source but '" +
                          d.name + "' in the destination");
    }
    if (s.weights.shape() != d.weights.shape() || s.bias.shape() != d.bias.shape()) {
      throw TransferError("layer " + s.name + " has shape " + shapeToString(s.weights.shape()) +
                          " in the source but " + shapeToString(d.weights.shape()) +
                          " in the destination");
    }
    d.weights = s.weights;
    d.bias = s.bias;
  }
  if (src.layers.back().name != dst.layers.back().name) {
    throw TransferError("final layers are named differently");
  }
  return dst;
}

HeadReplacement replaceHead(const NetworkState& net, const ArchitectureSpec& spec,
                            std::size_t classCount, InitMethod init, std::uint64_t seed) {
  if (classCount < 2) {
    throw ConfigError("a classifier head needs at least 2 classes, got " +
                      std::to_string(classCount));
  }
  checkCompatible(net, spec);
  HeadReplacement out{net, withClassCount(spec, classCount)};
  const std::size_t head = out.net.layers.size() - 1;
  auto& layer = out.net.layers[head];
  Shape shape = layer.weights.shape();
  shape[0] = classCount;
  layer.weights = initWeights(shape, init, deriveSeed(seed, head));
  layer.bias = initBias(classCount);
  return out;
}

FineTunePlan makePlan(std::string_view rawName, const ArchitectureSpec& spec) {
  const auto layers = spec.trainableLayers();
  if (layers.empty()) throw ConfigError("architecture has no trainable layers");
  const std::string& head = layers.back();
  std::string name = trim(rawName);

  FineTunePlan plan;
  plan.name = name;
  auto fill = [&](std::size_t first) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      (i >= first ? plan.trainable : plan.frozen).push_back(layers[i]);
    }
  };

  const bool scratch = name == "scratch" ||
                       (name.size() > 8 && name.compare(name.size() - 8, 8, " scratch") == 0);
  if (scratch) {
    plan.scratch = true;
    plan.name = "scratch";
    fill(0);
    return plan;
  }
  // "Fine-tuned AlexNet:conv3-fc8" and "FT:conv3-fc8" name the same plan.
  const auto colon = name.find(':');
  if (colon == std::string::npos) throw ConfigError("unrecognized plan name '" + name + "'");
  const std::string prefix = trim(std::string_view(name).substr(0, colon));
  if (prefix != "FT" && prefix.rfind("Fine-tuned", 0) != 0) {
    throw ConfigError("unrecognized plan name '" + name + "'");
  }
  const std::string body = trim(std::string_view(name).substr(colon + 1));
  std::string first;
  if (body.rfind("only ", 0) == 0) {
    const std::string only = trim(std::string_view(body).substr(5));
    if (only != head) {
      throw ConfigError("plan '" + name + "' must tune the final layer " + head);
    }
    first = head;
    plan.name = "FT:only " + head;
  } else {
    const auto dash = body.find('-');
    if (dash == std::string::npos) throw ConfigError("unrecognized plan name '" + name + "'");
    first = trim(std::string_view(body).substr(0, dash));
    const std::string last = trim(std::string_view(body).substr(dash + 1));
    if (last != head) {
      throw ConfigError("plan '" + name + "' must end at the final layer " + head);
    }
    plan.name = "FT:" + first + "-" + head;
  }
  auto it = std::find(layers.begin(), layers.end(), first);
  if (it == layers.end()) {
    throw ConfigError("plan '" + name + "' names unknown layer '" + first + "'");
  }
  fill(static_cast<std::size_t>(it - layers.begin()));
  return plan;
}

std::vector<std::string> planLadder(const ArchitectureSpec& spec) {
  const auto layers = spec.trainableLayers();
  std::vector<std::string> names{"FT:only " + layers.back()};
  for (std::size_t i = layers.size() - 1; i-- > 0;) {
    names.push_back("FT:" + layers[i] + "-" + layers.back());
  }
  names.push_back("scratch");
  return names;
}

LearningSchedule applyPlan(const FineTunePlan& plan, const LearningSchedule& base,
                           double headRateMultiplier) {
  LearningSchedule out = base;
  const std::vector<std::string>* groups[] = {&plan.trainable, &plan.frozen};
  for (const auto* group : groups) {
    for (const auto& layer : *group) {
      if (!base.alphaPerLayer.count(layer)) {
        throw ConfigError("schedule has no learning rate for layer " + layer);
      }
    }
  }
  for (const auto& layer : plan.frozen) out.alphaPerLayer[layer] = 0.0;
  if (!plan.scratch && !plan.trainable.empty()) {
    out.alphaPerLayer[plan.trainable.back()] *= headRateMultiplier;
  }
  return out;
}

LearningSchedule uniformSchedule(const ArchitectureSpec& spec, double alpha, double mu,
                                 double gamma) {
  LearningSchedule s;
  s.mu = mu;
  s.gamma = gamma;
  for (const auto& name : spec.trainableLayers()) s.alphaPerLayer[name] = alpha;
  return s;
}

}  // namespace ftcnn
