#include "ftcnn/optim.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "ftcnn/error.hpp"

namespace ftcnn {

InitMethod parseInitMethod(std::string_view name) {
  if (name == "gaussian") return InitMethod::Gaussian;
  if (name == "xavier") return InitMethod::Xavier;
  if (name == "msra") return InitMethod::Msra;
  throw ConfigError("unknown initialization method '" + std::string(name) + "'");
}

std::string_view initMethodName(InitMethod method) {
  switch (method) {
    case InitMethod::Gaussian: return "gaussian";
    case InitMethod::Xavier: return "xavier";
    case InitMethod::Msra: return "msra";
  }
  return "?";
}

Tensor initWeights(const Shape& shape, InitMethod method, std::uint64_t seed) {
  if (shape.empty()) throw ConfigError("cannot initialize an empty shape");
  const std::size_t fanIn = shapeProduct(Shape(shape.begin() + 1, shape.end()));
  double stddev = kGaussianInitStddev;
  switch (method) {
    case InitMethod::Gaussian: break;
    case InitMethod::Xavier: stddev = std::sqrt(1.0 / static_cast<double>(fanIn)); break;
    case InitMethod::Msra: stddev = std::sqrt(2.0 / static_cast<double>(fanIn)); break;
    default: throw ConfigError("unknown initialization method");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor initBias(std::size_t length) { return Tensor({length}, 0.0); }

void LearningSchedule::validate() const {
  if (!(mu >= 0.0 && mu < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("scheduling rate must lie in (0, 1]");
  if (!(biasRateMultiplier > 0.0)) throw ConfigError("bias rate multiplier must be positive");
  if (batchSize == 0 || epochLength == 0) {
    throw ConfigError("batch size and epoch length must be positive");
  }
  for (const auto& [name, alpha] : alphaPerLayer) {
    if (!(alpha >= 0.0)) throw ConfigError("learning rate of " + name + " must be >= 0");
  }
}

double effectiveRate(const LearningSchedule& sched, std::string_view layer, std::uint64_t t) {
  auto it = sched.alphaPerLayer.find(std::string(layer));
  if (it == sched.alphaPerLayer.end()) {
    throw ConfigError("no learning rate for layer '" + std::string(layer) + "'");
  }
  const std::uint64_t epoch = t * sched.batchSize / sched.epochLength;
  return std::pow(sched.gamma, static_cast<double>(epoch)) * it->second;
}

OptimizerState OptimizerState::zeros(const NetworkState& net) {
  OptimizerState s;
  for (const auto& l : net.layers) {
    s.weightVelocity.emplace_back(l.weights.shape(), 0.0);
    s.biasVelocity.emplace_back(l.bias.shape(), 0.0);
  }
  return s;
}

void sgdStep(NetworkState& net, OptimizerState& opt, const Gradients& grads,
             const LearningSchedule& sched) {
  const std::size_t n = net.layers.size();
  if (grads.layers.size() != n || opt.weightVelocity.size() != n || opt.biasVelocity.size() != n) {
    throw OptimizerError("optimizer state, gradients and network disagree on layer count");
  }
  for (std::size_t l = 0; l < n; ++l) {
    auto& layer = net.layers[l];
    const auto& g = grads.layers[l];
    if (g.weights.shape() != layer.weights.shape() || g.bias.shape() != layer.bias.shape() ||
        opt.weightVelocity[l].shape() != layer.weights.shape() ||
        opt.biasVelocity[l].shape() != layer.bias.shape()) {
      throw OptimizerError("shape mismatch in layer " + layer.name);
    }
  }
  for (std::size_t l = 0; l < n; ++l) {
    auto& layer = net.layers[l];
    const auto& g = grads.layers[l];
    const double rate = effectiveRate(sched, layer.name, opt.iteration);
    const double biasRate = rate * sched.biasRateMultiplier;

    auto w = layer.weights.data();
    auto v = opt.weightVelocity[l].data();
    auto gw = g.weights.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = sched.mu * v[i] - rate * gw[i];
      w[i] += v[i];
    }
    auto b = layer.bias.data();
    auto vb = opt.biasVelocity[l].data();
    auto gb = g.bias.data();
    for (std::size_t i = 0; i < b.size(); ++i) {
      vb[i] = sched.mu * vb[i] - biasRate * gb[i];
      b[i] += vb[i];
    }
  }
  ++opt.iteration;
}

namespace {

std::string trimCell(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> splitRow(const std::string& line) {
  std::string s = trimCell(line);
  if (!s.empty() && s.front() == '|') s.erase(0, 1);
  if (!s.empty() && s.back() == '|') s.pop_back();
  std::vector<std::string> cells;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, '|')) cells.push_back(trimCell(cell));
  return cells;
}

double parseReal(const std::string& cell, std::size_t line) {
  try {
    std::size_t used = 0;
    double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("schedule line " + std::to_string(line) + ": bad number '" + cell + "'");
  }
}

}  // namespace

std::vector<NamedSchedule> parseScheduleTable(std::string_view text) {
  enum class Column { Mu, Gamma, Alpha, BiasMultiplier };
  std::vector<std::pair<Column, std::string>> columns;
  std::vector<NamedSchedule> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineNo = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto t = trimCell(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = splitRow(t);
    if (!header) {
      for (std::size_t i = 1; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (c == "mu") {
          columns.emplace_back(Column::Mu, "");
        } else if (c == "gamma") {
          columns.emplace_back(Column::Gamma, "");
        } else if (c == "bias_multiplier") {
          columns.emplace_back(Column::BiasMultiplier, "");
        } else if (c.rfind("alpha_", 0) == 0 && c.size() > 6) {
          columns.emplace_back(Column::Alpha, c.substr(6));
        } else {
          throw ConfigError("schedule header: unknown column '" + c + "'");
        }
      }
      header = true;
      continue;
    }
    if (cells.size() != columns.size() + 1) {
      throw ConfigError("schedule line " + std::to_string(lineNo) + ": expected " +
                        std::to_string(columns.size() + 1) + " cells");
    }
    NamedSchedule row;
    row.name = cells[0];
    for (std::size_t i = 0; i < columns.size(); ++i) {
      const double v = parseReal(cells[i + 1], lineNo);
      switch (columns[i].first) {
        case Column::Mu: row.schedule.mu = v; break;
        case Column::Gamma: row.schedule.gamma = v; break;
        case Column::BiasMultiplier: row.schedule.biasRateMultiplier = v; break;
        case Column::Alpha: row.schedule.alphaPerLayer[columns[i].second] = v; break;
      }
    }
    row.schedule.validate();
    out.push_back(std::move(row));
  }
  if (!header) throw ConfigError("schedule table is empty");
  return out;
}

}  // namespace ftcnn
