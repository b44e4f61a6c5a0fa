// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ftcnn/error.hpp"
#include "ftcnn/eval.hpp"
#include "ftcnn/experiment.hpp"
#include "ftcnn/nn.hpp"
#include "ftcnn/optim.hpp"
#include "ftcnn/transfer.hpp"
#include "gradcheck.hpp"

using namespace ftcnn;
using ftcnn::testing::dot;
using ftcnn::testing::maxRelativeError;
using ftcnn::testing::numericGradient;
using ftcnn::testing::randomTensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool cond, const std::string& what) {
  if (!cond) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + what;
  }
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("ftcnn_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

const fs::path kSource = FTCNN_SOURCE_DIR;

// ---- 1 ----

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

Outcome shapeOracle() {
  Outcome o;
  const std::vector<Shape> printed{{3, 227, 227}, {96, 55, 55}, {96, 27, 27}, {256, 27, 27},
                                   {256, 13, 13}, {384, 13, 13}, {384, 13, 13}, {256, 13, 13},
                                   {256, 6, 6},   {4096, 1},     {4096, 1},     {7, 1}};
  // Kernel counts come from the output column; spatial extents are inferred.
  const auto shapes = inferShapes(parseArchitectureTable(kAlexNetTable, 7));
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < printed.size(); ++i) mismatches += i >= shapes.size() || shapes[i] != printed[i];
  mismatches += shapes.size() != printed.size();
  require(o, mismatches == 0, std::to_string(mismatches) + " mismatches");
  o.detail = "12 rows, " + std::to_string(mismatches) + " mismatches" + (o.pass ? "" : " | " + o.detail);
  return o;
}

// ---- 2 ----

Outcome gradientSuite() {
  Outcome o;
  double worst = 0.0;
  const auto track = [&](const Tensor& a, const Tensor& n) { worst = std::max(worst, maxRelativeError(a, n)); };
  const auto spec = ArchitectureBuilder({2, 6, 6})
                        .conv("conv1", 3, {3, 3}, 1, 1)
                        .maxPool("pool1", {2, 2}, 2)
                        .fullyConnected("fc2", 5)
                        .fullyConnected("fc3", 3)
                        .build();
  std::size_t params = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    {
      const std::size_t stride = 1 + seed % 2, pad = seed % 3;
      auto x = randomTensor({2, 2, 6, 5}, rng);
      auto w = randomTensor({3, 2, 3, 3}, rng);
      auto b = randomTensor({3}, rng);
      auto r = randomTensor(layers::convForward(x, w, b, stride, pad).shape(), rng);
      Tensor dx, dw(w.shape()), db(b.shape());
      layers::convBackward(x, w, stride, pad, r, &dx, &dw, &db);
      track(dx, numericGradient([&](const Tensor& v) { return dot(r, layers::convForward(v, w, b, stride, pad)); }, x));
      track(dw, numericGradient([&](const Tensor& v) { return dot(r, layers::convForward(x, v, b, stride, pad)); }, w));
      track(db, numericGradient([&](const Tensor& v) { return dot(r, layers::convForward(x, w, v, stride, pad)); }, b));
    }
    {
      auto x = randomTensor({2, 2, 6, 6}, rng);
      const std::size_t stride = 1 + seed % 2, pad = seed % 2;
      auto fwd = layers::maxPoolForward(x, {3, 3}, stride, pad);
      auto r = randomTensor(fwd.y.shape(), rng);
      track(layers::maxPoolBackward(x.shape(), fwd.argmax, r),
            numericGradient([&](const Tensor& v) { return dot(r, layers::maxPoolForward(v, {3, 3}, stride, pad).y); }, x));
    }
    {
      auto x = randomTensor({3, 2, 2, 2}, rng);
      auto w = randomTensor({4, 8}, rng);
      auto b = randomTensor({4}, rng);
      auto r = randomTensor({3, 4}, rng);
      Tensor dx, dw(w.shape()), db(b.shape());
      layers::denseBackward(x, w, r, &dx, &dw, &db);
      track(dx, numericGradient([&](const Tensor& v) { return dot(r, layers::denseForward(v, w, b)); }, x));
      track(dw, numericGradient([&](const Tensor& v) { return dot(r, layers::denseForward(x, v, b)); }, w));
      track(db, numericGradient([&](const Tensor& v) { return dot(r, layers::denseForward(x, w, v)); }, b));
    }
    {
      auto x = randomTensor({4, 7}, rng);
      auto r = randomTensor({4, 7}, rng);
      track(layers::reluBackward(x, r), numericGradient([&](const Tensor& v) { return dot(r, layers::reluForward(v)); }, x));
    }
    {
      auto z = randomTensor({3, 4}, rng, 2.0);
      auto r = randomTensor({3, 4}, rng);
      track(layers::softmaxBackward(layers::softmaxForward(z), r),
            numericGradient([&](const Tensor& v) { return dot(r, layers::softmaxForward(v)); }, z));
    }
    {
      auto net = buildNetwork(spec, InitMethod::Msra, static_cast<std::uint64_t>(seed));
      params = net.parameterCount();
      auto batch = randomTensor({3, 2, 6, 6}, rng);
      const std::vector<int> labels{0, 2, 1};
      auto grads = backward(net, spec, forward(net, spec, batch), labels);
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        for (int which = 0; which < 2; ++which) {
          auto loss = [&](const Tensor& v) {
            NetworkState probe = net;
            (which ? probe.layers[l].bias : probe.layers[l].weights) = v;
            return crossEntropyLoss(predict(probe, spec, batch), labels);
          };
          track(which ? grads.layers[l].bias : grads.layers[l].weights,
                numericGradient(loss, which ? net.layers[l].bias : net.layers[l].weights));
        }
      }
    }
  }
  require(o, worst < 1e-4, "max relative error " + std::to_string(worst));
  require(o, params <= 10000, "composite net too large");
  o.detail = "20 seeds, composite net " + std::to_string(params) + " params, max rel err " +
             fmt(worst * 1e6, 3) + "e-6" + (o.pass ? "" : " | " + o.detail);
  return o;
}

// ---- 3 ----

Outcome updateSemantics() {
  Outcome o;
  // (a) frozen layers constant over 1000 real training steps.
  const auto spec = ArchitectureBuilder({1, 6, 6})
                        .conv("conv1", 2, {3, 3})
                        .fullyConnected("fc2", 4)
                        .fullyConnected("fc3", 2)
                        .build();
  auto net = buildNetwork(spec, InitMethod::Xavier, 1);
  const NetworkState before = net;
  const auto plan = makePlan("FT:only fc3", spec);
  auto sched = applyPlan(plan, uniformSchedule(spec, 0.01));
  sched.batchSize = 4;
  sched.epochLength = 40;
  auto opt = OptimizerState::zeros(net);
  std::mt19937_64 rng(2);
  for (int step = 0; step < 1000; ++step) {
    auto batch = randomTensor({4, 1, 6, 6}, rng);
    const std::vector<int> labels{0, 1, 1, 0};
    const auto trace = forward(net, spec, batch);
    sgdStep(net, opt, backward(net, spec, trace, labels, plan.mask(net)), sched);
  }
  require(o, net.layers[0] == before.layers[0] && net.layers[1] == before.layers[1],
          "frozen layer changed");
  require(o, !(net.layers[2] == before.layers[2]), "trainable head did not move");

  // (b) effective rate with N=100, |X|=1000.
  LearningSchedule s;
  s.alphaPerLayer = {{"fc8", 0.01}};
  s.gamma = 0.95;
  s.batchSize = 100;
  s.epochLength = 1000;
  std::size_t rateMismatch = 0;
  for (std::uint64_t t = 0; t < 2000; ++t) {
    const double expect = std::pow(0.95, static_cast<double>(t / 10)) * 0.01;
    rateMismatch += effectiveRate(s, "fc8", t) != expect;
  }
  require(o, rateMismatch == 0, std::to_string(rateMismatch) + " rate mismatches");

  // (c) two momentum steps unrolled by hand on a single fc layer.
  NetworkState one;
  one.layers.push_back({"fc", Tensor::fromList({1, 2}, {0.5, -0.25}), Tensor::fromList({1}, {0.1})});
  LearningSchedule m;
  m.alphaPerLayer = {{"fc", 0.001}};
  m.mu = 0.9;
  m.gamma = 0.95;
  auto mopt = OptimizerState::zeros(one);
  Gradients g1 = one.zerosLike(), g2 = one.zerosLike();
  g1.layers[0].weights = Tensor::fromList({1, 2}, {0.3, -1.2});
  g1.layers[0].bias = Tensor::fromList({1}, {0.7});
  g2.layers[0].weights = Tensor::fromList({1, 2}, {-0.4, 0.9});
  g2.layers[0].bias = Tensor::fromList({1}, {0.2});
  const NetworkState start = one;
  sgdStep(one, mopt, g1, m);
  sgdStep(one, mopt, g2, m);
  double worst = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const bool bias = i == 2;
    // N = |X| = 1, so the second step runs at gamma * alpha.
    const double rate1 = 0.001 * (bias ? 2.0 : 1.0), rate2 = 0.95 * rate1;
    const double w0 = bias ? start.layers[0].bias[0] : start.layers[0].weights[i];
    const double a = bias ? g1.layers[0].bias[0] : g1.layers[0].weights[i];
    const double b = bias ? g2.layers[0].bias[0] : g2.layers[0].weights[i];
    const double v1 = -rate1 * a;
    const double v2 = 0.9 * v1 - rate2 * b;
    const double got = bias ? one.layers[0].bias[0] : one.layers[0].weights[i];
    worst = std::max(worst, std::abs(got - (w0 + v1 + v2)));
  }
  require(o, worst <= 1e-15, "momentum trace off by " + std::to_string(worst));
  o.detail = "frozen bitwise over 1000 steps, 2000 rates exact, momentum |err| " +
             (worst == 0.0 ? std::string("0") : fmt(worst * 1e16, 2) + "e-16") +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

// ---- 4 ----

Outcome planLadderTable() {
  Outcome o;
  std::ifstream in(kSource / "configs" / "alexnet_table2.schedule");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto rows = parseScheduleTable(buf.str());
  const auto spec = alexnetSpec(2);
  const auto base = uniformSchedule(spec, 0.001);
  std::size_t checked = 0;
  for (const auto& row : rows) {
    const auto got = applyPlan(makePlan(row.name, spec), base);
    bool same = true;
    for (const auto& [layer, alpha] : row.schedule.alphaPerLayer) {
      same &= (got.alphaPerLayer.at(layer) == 0.0) == (alpha == 0.0);
    }
    require(o, same, "pattern differs for " + row.name);
    ++checked;
  }
  require(o, checked == 9, std::to_string(checked) + " rows in the table");
  o.detail = std::to_string(checked) + " configurations" + (o.pass ? "" : " | " + o.detail);
  return o;
}

// ---- 5 ----

double mannWhitney(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

Outcome statisticsOracles() {
  Outcome o;
  std::mt19937_64 rng(1);
  double worstAuc = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    std::uniform_int_distribution<int> coarse(0, 1 + static_cast<int>(rng() % 20));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse(rng) / 7.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    worstAuc = std::max(worstAuc, std::abs(rocAuc(s, y) - mannWhitney(s, y)));
  }
  require(o, worstAuc < 1e-12, "AUC differs from Mann-Whitney by " + std::to_string(worstAuc));

  std::size_t frocBad = 0;
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 19;
    const std::size_t units = 1 + rng() % 4;
    std::vector<GroupRecord> r;
    for (std::size_t i = 0; i < n; ++i) {
      const int label = i == 0 ? 1 : static_cast<int>(rng() % 2);
      std::optional<std::string> lesion;
      if (label) lesion = "L" + std::to_string(rng() % 4);
      r.push_back({"g" + std::to_string(i), "u", lesion, std::round(u(rng) * 10) / 10, label});
    }
    const auto curve = frocCurve(r, units);
    std::set<double> thresholds;
    for (const auto& g : r) thresholds.insert(g.meanScore);
    if (curve.points.size() != thresholds.size() + 1) {
      ++frocBad;
      continue;
    }
    std::size_t k = 1;
    for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it, ++k) {
      std::set<std::string> all, hit;
      std::size_t fps = 0;
      for (const auto& g : r) {
        if (g.label) {
          all.insert(*g.lesionId);
          if (g.meanScore >= *it) hit.insert(*g.lesionId);
        } else if (g.meanScore >= *it) {
          ++fps;
        }
      }
      frocBad += curve.points[k].y != static_cast<double>(hit.size()) / static_cast<double>(all.size());
      frocBad += curve.points[k].x != static_cast<double>(fps) / static_cast<double>(units);
    }
  }
  require(o, frocBad == 0, std::to_string(frocBad) + " FROC mismatches");

  const auto [lo, hi] = sensitivityCI(8, 10);
  require(o, std::abs(lo - 0.490) <= 0.005 && std::abs(hi - 0.943) <= 0.005,
          "Wilson (8,10) = (" + fmt(lo) + ", " + fmt(hi) + ")");

  const std::vector<double> eight{1, 2, 3, 4, 5, 6, 7, 8};
  const auto b = tukeyBox(eight);
  require(o, b.median == 4.5 && b.q1 == 2.75 && b.q3 == 6.25 && b.outliers.empty(),
          "Tukey [1..8] stats");
  const std::vector<double> five{1, 2, 3, 4, 100};
  const auto c = tukeyBox(five);
  require(o, c.outliers == std::vector<double>{100}, "Tukey outlier not flagged");
  o.detail = "AUC |err| " + fmt(worstAuc * 1e15, 2) + "e-15 over 500, FROC 200 exhaustive, Wilson (" +
             fmt(lo, 3) + ", " + fmt(hi, 3) + "), Tukey examples" + (o.pass ? "" : " | " + o.detail);
  return o;
}

// ---- 6 ----

std::size_t epochsToFraction(const std::vector<double>& trace, double fraction) {
  const double best = *std::max_element(trace.begin(), trace.end());
  for (std::size_t e = 0; e < trace.size(); ++e)
    if (trace[e] >= fraction * best) return e + 1;
  return trace.size();
}

Outcome transferExperiment() {
  Outcome o;
  auto config = loadExperimentConfig(kSource / "configs" / "transfer.json");
  config.output = scratch("transfer");
  const auto report = runExperiment(config);
  std::map<std::pair<std::string, double>, const CellResult*> cell;
  for (const auto& c : report.cells) {
    if (!c.ok) require(o, false, c.plan + " failed: " + c.error);
    cell[{c.plan, c.fraction}] = &c;
  }
  if (!o.pass) return o;
  const auto at = [&](const std::string& plan, double f) { return *cell.at({plan, f}); };
  const auto& deep1 = at("FT:conv1-fc4", 1.0);
  const auto& last1 = at("FT:only fc4", 1.0);
  const auto& last2 = at("FT:fc3-fc4", 1.0);
  const auto& scratch1 = at("scratch", 1.0);
  const auto& deepQ = at("FT:conv1-fc4", 0.25);
  const auto& scratchQ = at("scratch", 0.25);
  require(o, deep1.testAuc >= last1.testAuc - 0.02, "(a) deep below FT:only fc4");
  require(o, deep1.testAuc >= last2.testAuc - 0.02, "(a) deep below FT:fc3-fc4");
  require(o, deepQ.testAuc > scratchQ.testAuc, "(b) deep not above scratch at 0.25");
  const auto deepEpochs = epochsToFraction(deep1.validationTrace, 0.95);
  const auto scratchEpochs = epochsToFraction(scratch1.validationTrace, 0.95);
  require(o, deepEpochs < scratchEpochs, "(c) deep not faster than scratch");
  o.detail = "(a) f=1 AUC deep " + fmt(deep1.testAuc) + " vs only-last " + fmt(last1.testAuc) +
             " / last-2 " + fmt(last2.testAuc) + "; (b) f=0.25 deep " + fmt(deepQ.testAuc) +
             " vs scratch " + fmt(scratchQ.testAuc) + "; (c) epochs to 95% deep " +
             std::to_string(deepEpochs) + " vs scratch " + std::to_string(scratchEpochs) +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

// ---- 7 ----

std::vector<std::vector<double>> readNumericCsv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

Outcome segmentationPipeline() {
  Outcome o;
  auto config = loadExperimentConfig(kSource / "configs" / "cimt.json");
  config.output = scratch("cimt");
  const auto report = runExperiment(config);
  if (report.cells.size() != 1 || !report.cells[0].ok) {
    require(o, false, report.cells.empty() ? "no cell" : report.cells[0].error);
    return o;
  }
  const auto& c = report.cells[0];
  const auto rows = readNumericCsv(config.output / c.directory / "errors.csv");
  std::vector<double> li, ma, th;
  for (const auto& r : rows) {
    li.push_back(r.at(1));
    ma.push_back(r.at(2));
    th.push_back(r.at(3) - r.at(4));
  }
  const std::size_t patches = static_cast<std::size_t>(
      std::llround(config.dataset.trainRois * (2 * config.dataset.perInterface + config.dataset.background)));
  require(o, rows.size() == 20, std::to_string(rows.size()) + " ROIs");
  require(o, patches == 200000, std::to_string(patches) + " training patches");
  const auto bLi = tukeyBox(li), bMa = tukeyBox(ma), bTh = tukeyBox(th);
  require(o, bLi.mean < 1.0, "lumen-intima error " + fmt(bLi.mean));
  require(o, bMa.mean < 1.0, "media-adventitia error " + fmt(bMa.mean));
  require(o, std::abs(bTh.mean) < 0.5, "thickness off by " + fmt(bTh.mean));
  const auto box = [](const BoxStats& b) {
    return "mean " + fmt(b.mean, 3) + " median " + fmt(b.median, 3) + " IQR [" + fmt(b.q1, 3) +
           ", " + fmt(b.q3, 3) + "]";
  };
  o.detail = "LI err " + box(bLi) + "; MA err " + box(bMa) + "; thickness - 6px " + box(bTh) +
             (o.pass ? "" : " | " + o.detail);
  return o;
}

// ---- 8 ----

std::map<std::string, std::string> csvFiles(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).generic_string()] = ss.str();
  }
  return out;
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Outcome determinism() {
  Outcome o;
  const std::string cli = FTCNN_CLI;
  const fs::path transfer = kSource / "tests" / "data" / "quick_transfer.json";
  const fs::path cimt = kSource / "tests" / "data" / "quick_cimt.json";
  std::vector<std::map<std::string, std::string>> outputs;
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = scratch("determinism" + std::to_string(rep));
    const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
    int rc = 0;
    rc |= run(cli + " train --config " + q(transfer) + " --seed 4 --out " + q(dir / "train"));
    rc |= run(cli + " finetune --config " + q(transfer) + " --seed 4 --plans \"FT:fc3-fc4\" --source " +
              q(dir / "train/cells/scratch_f1_gaussian/best.ftck") + " --out " + q(dir / "finetune"));
    rc |= run(cli + " evaluate --checkpoint " + q(dir / "train/cells/scratch_f1_gaussian/best.ftck") +
              " --config " + q(transfer) + " --out " + q(dir / "evaluate"));
    rc |= run(cli + " sweep --config " + q(transfer) + " --seed 9 --out " + q(dir / "sweep"));
    rc |= run(cli + " report --run " + q(dir / "sweep"));
    rc |= run(cli + " train --config " + q(cimt) + " --seed 5 --out " + q(dir / "cimt"));
    rc |= run(cli + " segment --checkpoint " + q(dir / "cimt/cells/scratch_f1_msra/best.ftck") +
              " --config " + q(cimt) + " --out " + q(dir / "segment"));
    rc |= run(cli + " report --run " + q(dir / "cimt"));
    require(o, rc == 0, "a CLI verb failed on pass " + std::to_string(rep + 1));
    outputs.push_back(csvFiles(dir));
  }
  std::size_t differing = 0;
  for (const auto& [name, text] : outputs[0]) {
    const auto it = outputs[1].find(name);
    differing += it == outputs[1].end() || it->second != text;
  }
  differing += outputs[0].size() != outputs[1].size();
  require(o, differing == 0, std::to_string(differing) + " CSV files differ");
  require(o, outputs[0].size() > 20, "too few CSV files emitted");
  o.detail = std::to_string(outputs[0].size()) + " CSV files from train/finetune/evaluate/sweep/report/segment, " +
             std::to_string(differing) + " differ" + (o.pass ? "" : " | " + o.detail);
  return o;
}

constexpr double kNoBudget = 1e300;

struct Criterion {
  const char* name;
  double budgetSeconds;
  std::function<Outcome()> check;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"1 shape oracle", 1, shapeOracle},
      {"2 gradient suite", 120, gradientSuite},
      {"3 update semantics", kNoBudget, updateSemantics},
      {"4 plan ladder", kNoBudget, planLadderTable},
      {"5 statistics oracles", 60, statisticsOracles},
      {"6 synthetic transfer", 600, transferExperiment},
      {"7 segmentation pipeline", 600, segmentationPipeline},
      {"8 determinism", kNoBudget, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= c.budgetSeconds) {
      o.pass = false;
      o.detail += "; over the " + fmt(c.budgetSeconds, 0) + " s budget";
    }
    failures += !o.pass;
    std::printf("%s criterion %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
