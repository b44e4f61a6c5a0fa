#include "ftcnn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ftcnn/error.hpp"
#include "ftcnn/random.hpp"

namespace ftcnn {

namespace fs = std::filesystem;
using nlohmann::json;

EvaluationKind parseEvaluationKind(std::string_view name) {
  if (name == "roc") return EvaluationKind::Roc;
  if (name == "froc") return EvaluationKind::Froc;
  if (name == "segmentation") return EvaluationKind::Segmentation;
  throw ConfigError("unknown evaluation kind '" + std::string(name) + "'");
}

std::string evaluationKindName(EvaluationKind kind) {
  switch (kind) {
    case EvaluationKind::Roc:
      return "roc";
    case EvaluationKind::Froc:
      return "froc";
    case EvaluationKind::Segmentation:
      return "segmentation";
  }
  return "roc";
}

namespace {

const std::set<std::string> kDatasetKinds{"synthetic-shapes", "synthetic-patterns",
                                          "synthetic-cimt", "manifest"};

bool isBuiltinArchitecture(const fs::path& p) { return p == "alexnet"; }

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty() || isBuiltinArchitecture(p)) return p;
  return base / p;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

std::string cellName(const std::string& plan, double fraction, const std::string& init) {
  return sanitize(plan) + "_f" + sanitize(formatNumber(fraction)) + "_" + init;
}

std::string groupName(double fraction, const std::string& init) {
  return "f" + sanitize(formatNumber(fraction)) + "_" + init;
}

void writeJson(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json readJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void writeConvergenceCsv(const fs::path& path, const std::vector<double>& auc,
                         const std::vector<double>& loss) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,validationAuc,trainLoss\n";
  for (std::size_t e = 0; e < auc.size(); ++e) {
    out << e + 1 << ',' << formatNumber(auc[e]) << ','
        << (e < loss.size() ? formatNumber(loss[e]) : "") << '\n';
  }
}

std::vector<std::vector<std::string>> readCsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

LearningSchedule baseSchedule(const ExperimentConfig& c, const ArchitectureSpec& spec) {
  auto s = uniformSchedule(spec, c.schedule.alpha, c.schedule.mu, c.schedule.gamma);
  for (const auto& [layer, alpha] : c.schedule.alphaPerLayer) {
    if (!s.alphaPerLayer.contains(layer)) {
      throw ConfigError("alphaPerLayer names unknown layer '" + layer + "'");
    }
    s.alphaPerLayer[layer] = alpha;
  }
  s.biasRateMultiplier = c.schedule.biasMultiplier;
  s.batchSize = c.schedule.batchSize;
  return s;
}

json cellToJson(const CellResult& c) {
  return json{{"plan", c.plan},
              {"fraction", c.fraction},
              {"init", c.init},
              {"directory", c.directory},
              {"ok", c.ok},
              {"error", c.error},
              {"epochs", c.epochs},
              {"bestEpoch", c.bestEpoch},
              {"bestValidationAuc", c.bestValidationAuc},
              {"testAuc", c.testAuc},
              {"trainUnits", c.trainUnits},
              {"validationTrace", c.validationTrace},
              {"meanErrorLI", c.meanErrorLI},
              {"meanErrorMA", c.meanErrorMA},
              {"meanThickness", c.meanThickness}};
}

CellResult cellFromJson(const json& j) {
  CellResult c;
  read(j, "plan", c.plan);
  read(j, "fraction", c.fraction);
  read(j, "init", c.init);
  read(j, "directory", c.directory);
  read(j, "ok", c.ok);
  read(j, "error", c.error);
  read(j, "epochs", c.epochs);
  read(j, "bestEpoch", c.bestEpoch);
  read(j, "bestValidationAuc", c.bestValidationAuc);
  read(j, "testAuc", c.testAuc);
  read(j, "trainUnits", c.trainUnits);
  read(j, "validationTrace", c.validationTrace);
  read(j, "meanErrorLI", c.meanErrorLI);
  read(j, "meanErrorMA", c.meanErrorMA);
  read(j, "meanThickness", c.meanThickness);
  return c;
}

}  // namespace

// ---- config ----

void ExperimentConfig::validate() const {
  if (architecture.empty()) throw ConfigError("config needs an architecture");
  if (!isBuiltinArchitecture(architecture) && !fs::exists(architecture)) {
    throw ConfigError("architecture file " + architecture.string() + " does not exist");
  }
  if (plans.empty()) throw ConfigError("config needs at least one plan");
  if (inits.empty()) throw ConfigError("config needs at least one initializer");
  for (const auto& i : inits) parseInitMethod(i);
  if (trainFractions.empty()) throw ConfigError("config needs at least one training fraction");
  for (double f : trainFractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ConfigError("training fraction " + formatNumber(f) + " is outside (0,1]");
    }
  }
  if (!(trainSplit > 0.0 && trainSplit < 1.0)) throw ConfigError("trainSplit must be in (0,1)");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (schedule.batchSize == 0) throw ConfigError("batchSize must be at least 1");
  if (!kDatasetKinds.contains(dataset.kind)) {
    throw ConfigError("unknown dataset kind '" + dataset.kind + "'");
  }
  if (dataset.kind == "manifest") {
    for (const auto& p : {dataset.train, dataset.test}) {
      if (!fs::exists(p / "manifest.csv")) {
        throw ConfigError("dataset manifest " + (p / "manifest.csv").string() + " does not exist");
      }
    }
  }
  if ((dataset.kind == "synthetic-cimt") != (evaluation == EvaluationKind::Segmentation)) {
    throw ConfigError("segmentation evaluation goes with the synthetic-cimt dataset");
  }
  snake.validate();
  if (source.checkpoint && !fs::exists(*source.checkpoint)) {
    throw ConfigError("source checkpoint " + source.checkpoint->string() + " does not exist");
  }
  const auto spec = experimentSpec(*this, 2);
  bool needsSource = false;
  for (const auto& p : plans) {
    try {
      needsSource |= !makePlan(p, spec).scratch;
    } catch (const Error& e) {
      throw ConfigError(std::string("invalid plan: ") + e.what());
    }
  }
  if (needsSource && !source.checkpoint && !source.pretrain) {
    throw ConfigError("fine-tuning plans need a source checkpoint or source.pretrain");
  }
  if (source.pretrain) parseInitMethod(source.init);
}

ExperimentConfig configFromJson(const json& j, const fs::path& baseDir) {
  ExperimentConfig c;
  try {
    std::string arch;
    read(j, "architecture", arch);
    c.architecture = resolve(arch, baseDir);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      read(s, "mu", c.schedule.mu);
      read(s, "gamma", c.schedule.gamma);
      read(s, "alpha", c.schedule.alpha);
      read(s, "alphaPerLayer", c.schedule.alphaPerLayer);
      read(s, "biasMultiplier", c.schedule.biasMultiplier);
      read(s, "headMultiplier", c.schedule.headMultiplier);
      read(s, "batchSize", c.schedule.batchSize);
    }
    if (j.contains("plan")) c.plans = {j.at("plan").get<std::string>()};
    read(j, "plans", c.plans);
    read(j, "inits", c.inits);
    read(j, "trainFractions", c.trainFractions);
    read(j, "trainSplit", c.trainSplit);
    read(j, "epochs", c.epochs);
    read(j, "patience", c.patience);
    if (j.contains("evaluation")) c.evaluation = parseEvaluationKind(j.at("evaluation").get<std::string>());
    read(j, "operatingPoints", c.operatingPoints);
    read(j, "seed", c.seed);
    read(j, "deterministic", c.deterministic);
    std::string out;
    read(j, "output", out);
    if (!out.empty()) c.output = resolve(out, baseDir);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      auto& o = c.dataset;
      read(d, "kind", o.kind);
      read(d, "seed", o.seed);
      read(d, "units", o.units);
      read(d, "groupsPerUnit", o.groupsPerUnit);
      read(d, "testUnits", o.testUnits);
      read(d, "count", o.count);
      read(d, "testCount", o.testCount);
      read(d, "noise", o.noise);
      read(d, "trainRois", o.trainRois);
      read(d, "testRois", o.testRois);
      read(d, "perInterface", o.perInterface);
      read(d, "background", o.background);
      read(d, "roiHeight", o.roiHeight);
      read(d, "roiWidth", o.roiWidth);
      read(d, "offsetPx", o.offsetPx);
      read(d, "farDistance", o.farDistance);
      read(d, "pxToMm", o.pxToMm);
      std::string train, test;
      read(d, "train", train);
      read(d, "test", test);
      if (!train.empty()) o.train = resolve(train, baseDir);
      if (!test.empty()) o.test = resolve(test, baseDir);
    }
    if (j.contains("source")) {
      const auto& s = j.at("source");
      if (s.contains("checkpoint")) {
        c.source.checkpoint = resolve(s.at("checkpoint").get<std::string>(), baseDir);
      }
      read(s, "pretrain", c.source.pretrain);
      read(s, "count", c.source.count);
      read(s, "epochs", c.source.epochs);
      read(s, "alpha", c.source.alpha);
      read(s, "noise", c.source.noise);
      read(s, "init", c.source.init);
      read(s, "seed", c.source.seed);
    }
    if (j.contains("snake")) {
      const auto& s = j.at("snake");
      read(s, "tension", c.snake.tension);
      read(s, "rigidity", c.snake.rigidity);
      read(s, "externalWeight", c.snake.externalWeight);
      read(s, "stepSize", c.snake.stepSize);
      read(s, "maxIters", c.snake.maxIters);
      read(s, "tol", c.snake.tol);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

json configToJson(const ExperimentConfig& c) {
  json j{{"architecture", c.architecture.string()},
         {"schedule",
          {{"mu", c.schedule.mu},
           {"gamma", c.schedule.gamma},
           {"alpha", c.schedule.alpha},
           {"alphaPerLayer", c.schedule.alphaPerLayer},
           {"biasMultiplier", c.schedule.biasMultiplier},
           {"headMultiplier", c.schedule.headMultiplier},
           {"batchSize", c.schedule.batchSize}}},
         {"plans", c.plans},
         {"inits", c.inits},
         {"trainFractions", c.trainFractions},
         {"trainSplit", c.trainSplit},
         {"epochs", c.epochs},
         {"patience", c.patience},
         {"evaluation", evaluationKindName(c.evaluation)},
         {"operatingPoints", c.operatingPoints},
         {"seed", c.seed},
         {"deterministic", c.deterministic},
         {"output", c.output.string()}};
  const auto& d = c.dataset;
  j["dataset"] = {{"kind", d.kind},
                  {"seed", d.seed},
                  {"units", d.units},
                  {"groupsPerUnit", d.groupsPerUnit},
                  {"testUnits", d.testUnits},
                  {"count", d.count},
                  {"testCount", d.testCount},
                  {"noise", d.noise},
                  {"trainRois", d.trainRois},
                  {"testRois", d.testRois},
                  {"perInterface", d.perInterface},
                  {"background", d.background},
                  {"roiHeight", d.roiHeight},
                  {"roiWidth", d.roiWidth},
                  {"offsetPx", d.offsetPx},
                  {"farDistance", d.farDistance},
                  {"pxToMm", d.pxToMm},
                  {"train", d.train.string()},
                  {"test", d.test.string()}};
  j["source"] = {{"pretrain", c.source.pretrain}, {"count", c.source.count},
                 {"epochs", c.source.epochs},     {"alpha", c.source.alpha},
                 {"noise", c.source.noise},       {"init", c.source.init},
                 {"seed", c.source.seed}};
  if (c.source.checkpoint) j["source"]["checkpoint"] = c.source.checkpoint->string();
  j["snake"] = {{"tension", c.snake.tension},     {"rigidity", c.snake.rigidity},
                {"externalWeight", c.snake.externalWeight}, {"stepSize", c.snake.stepSize},
                {"maxIters", c.snake.maxIters},   {"tol", c.snake.tol}};
  return j;
}

ExperimentConfig loadExperimentConfig(const fs::path& path) {
  json j;
  try {
    j = readJson(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return configFromJson(j, path.parent_path());
}

ArchitectureSpec experimentSpec(const ExperimentConfig& config, std::size_t classCount) {
  if (isBuiltinArchitecture(config.architecture)) return alexnetSpec(classCount);
  return loadArchitecture(config.architecture, classCount);
}

// ---- data ----

ExperimentData loadExperimentData(const DatasetConfig& d, const Shape& input) {
  if (input.size() != 3 || input[1] != input[2]) {
    throw ConfigError("synthetic datasets need a square (C,S,S) input, got " +
                      shapeToString(input));
  }
  ExperimentData out;
  synth::PatternOptions opts;
  opts.size = input[1];
  opts.channels = input[0];
  opts.noise = d.noise;
  if (d.kind == "synthetic-shapes") {
    out.pool = synth::shapeCandidates(d.units, d.groupsPerUnit, d.seed, opts);
    out.test = synth::shapeCandidates(d.testUnits, d.groupsPerUnit, deriveSeed(d.seed, 1), opts);
    out.classCount = 2;
  } else if (d.kind == "synthetic-patterns") {
    out.pool = synth::orientedPatterns(d.count, d.seed, opts);
    out.test = synth::orientedPatterns(d.testCount, deriveSeed(d.seed, 1), opts);
    out.classCount = 4;
  } else if (d.kind == "synthetic-cimt") {
    if (input[0] != 3) throw ConfigError("interface patches are 3-channel");
    synth::CimtOptions ro;
    ro.height = d.roiHeight;
    ro.width = d.roiWidth;
    ro.offsetPx = d.offsetPx;
    const CimtCounts counts{d.perInterface, d.background};
    for (std::size_t i = 0; i < d.trainRois; ++i) {
      const auto roi = synth::cimtRoi(deriveSeed(d.seed, i), ro);
      out.pool.append(extractCimtPatches(roi.image, roi.truth, counts, input[1],
                                         deriveSeed(d.seed + 1, i), "roi" + std::to_string(i),
                                         d.farDistance));
    }
    for (std::size_t i = 0; i < d.testRois; ++i) {
      auto roi = synth::cimtRoi(deriveSeed(d.seed + 2, i), ro);
      out.test.append(extractCimtPatches(roi.image, roi.truth, counts, input[1],
                                         deriveSeed(d.seed + 3, i), "test" + std::to_string(i),
                                         d.farDistance));
      out.testRois.push_back(std::move(roi));
    }
    out.classCount = 3;
  } else if (d.kind == "manifest") {
    out.pool = loadPatchSet(d.train);
    out.test = loadPatchSet(d.test);
    int top = 1;
    for (int l : out.pool.labels) top = std::max(top, l);
    out.classCount = static_cast<std::size_t>(top) + 1;
  } else {
    throw ConfigError("unknown dataset kind '" + d.kind + "'");
  }
  out.pool.validate();
  out.test.validate();
  out.testUnits = out.test.units().size();
  return out;
}

LabeledPatchSet reduceUnits(const LabeledPatchSet& set, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw SplitError("fraction " + formatNumber(fraction) + " is outside (0,1]");
  }
  auto units = set.units();
  if (units.size() < 2) throw SplitError("unit-level reduction needs at least 2 units");
  std::mt19937_64 rng(seed);
  std::shuffle(units.begin(), units.end(), rng);
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(units.size()))), 2,
      units.size());
  const std::set<std::string> kept(units.begin(), units.begin() + static_cast<std::ptrdiff_t>(keep));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (kept.contains(set.unitId[i])) idx.push_back(i);
  }
  return set.subset(idx);
}

TestEvaluation evaluateOnTest(const NetworkState& net, const ArchitectureSpec& spec,
                              const LabeledPatchSet& test, EvaluationKind kind,
                              std::size_t testUnits) {
  const Tensor probs = predictSet(net, spec, test);
  if (probs.extent(1) > 3) throw EvaluationError("test evaluation needs 2 or 3 classes");
  TestEvaluation ev;
  ev.records = aggregateGroups(positiveScores(probs), test);
  if (kind == EvaluationKind::Froc) {
    ev.curve = frocCurve(ev.records, testUnits);
  } else {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : ev.records) {
      scores.push_back(r.meanScore);
      labels.push_back(r.label != 0 ? 1 : 0);
    }
    ev.curve = rocCurve(scores, labels);
  }
  ev.area = auc(ev.curve);
  return ev;
}

// ---- runs ----

bool RunReport::ok() const {
  return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok; });
}

namespace {

struct Source {
  ArchitectureSpec spec;
  NetworkState net;
};

std::optional<Source> prepareSource(const ExperimentConfig& c, const fs::path& runDir) {
  if (c.source.checkpoint) {
    auto ckpt = loadCheckpoint(*c.source.checkpoint);
    return Source{std::move(ckpt.spec), std::move(ckpt.net)};
  }
  if (!c.source.pretrain) return std::nullopt;
  const auto spec = experimentSpec(c, 4);
  DatasetConfig d;
  d.kind = "synthetic-patterns";
  d.count = c.source.count;
  d.testCount = 4;
  d.noise = c.source.noise;
  d.seed = c.source.seed;
  const auto data = loadExperimentData(d, spec.inputShape());
  const auto [train, val] = splitTrainVal(data.pool, c.trainSplit, deriveSeed(c.source.seed, 2));
  auto sched = uniformSchedule(spec, c.source.alpha, c.schedule.mu, c.schedule.gamma);
  sched.biasRateMultiplier = c.schedule.biasMultiplier;
  sched.batchSize = c.schedule.batchSize;
  TrainOptions opts{c.source.epochs, c.patience, deriveSeed(c.source.seed, 3)};
  auto net = buildNetwork(spec, parseInitMethod(c.source.init), deriveSeed(c.source.seed, 4));
  auto r = trainNetwork(std::move(net), spec, makePlan("scratch", spec), sched, train, val, opts);
  saveCheckpoint(runDir / "source" / "source.ftck",
                 {spec, r.best, 0, r.bestEpoch, r.bestAuc});
  writeConvergenceCsv(runDir / "source" / "convergence.csv", r.validationAuc, r.trainLoss);
  return Source{spec, std::move(r.best)};
}

void writeErrorsCsv(const fs::path& path, const std::vector<std::array<double, 4>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "roi,errorLI,errorMA,thickness,trueThickness\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i << ',' << formatNumber(rows[i][0]) << ',' << formatNumber(rows[i][1]) << ','
        << formatNumber(rows[i][2]) << ',' << formatNumber(rows[i][3]) << '\n';
  }
}

void runCell(const ExperimentConfig& c, const ExperimentData& data,
             const std::optional<Source>& source, const fs::path& runDir, CellResult& cell) {
  const fs::path dir = runDir / cell.directory;
  fs::create_directories(dir);
  const auto spec = experimentSpec(c, data.classCount);
  const auto plan = makePlan(cell.plan, spec);
  const auto init = parseInitMethod(cell.init);

  const auto reduced = reduceUnits(data.pool, cell.fraction, deriveSeed(c.seed, 1));
  cell.trainUnits = reduced.units();
  const auto [train, val] = splitTrainVal(reduced, c.trainSplit, deriveSeed(c.seed, 2));

  NetworkState net;
  if (plan.scratch) {
    net = buildNetwork(spec, init, deriveSeed(c.seed, 3));
  } else {
    if (!source) throw TransferError("plan " + plan.name + " needs source weights");
    auto head = replaceHead(source->net, source->spec, data.classCount, init, deriveSeed(c.seed, 3));
    checkCompatible(head.net, spec);
    net = std::move(head.net);
  }
  const auto sched = applyPlan(plan, baseSchedule(c, spec), c.schedule.headMultiplier);
  const TrainOptions opts{c.epochs, c.patience, deriveSeed(c.seed, 4)};
  const auto r = trainNetwork(std::move(net), spec, plan, sched, train, val, opts);
  cell.epochs = r.validationAuc.size();
  cell.bestEpoch = r.bestEpoch;
  cell.bestValidationAuc = r.bestAuc;
  cell.validationTrace = r.validationAuc;
  const std::uint64_t perEpoch = (train.size() + sched.batchSize - 1) / sched.batchSize;
  saveCheckpoint(dir / "best.ftck", {spec, r.best, perEpoch * r.bestEpoch, r.bestEpoch, r.bestAuc});
  writeConvergenceCsv(dir / "convergence.csv", r.validationAuc, r.trainLoss);

  const auto ev = evaluateOnTest(r.best, spec, data.test, c.evaluation, data.testUnits);
  writeCurveCsv(dir / "curve.csv", ev.curve);
  cell.testAuc = ev.area;

  if (c.evaluation == EvaluationKind::Segmentation) {
    const std::size_t patch = spec.inputShape()[1];
    std::vector<std::array<double, 4>> rows;
    for (std::size_t i = 0; i < data.testRois.size(); ++i) {
      const auto& roi = data.testRois[i];
      const auto seg = segmentRoi(r.best, spec, roi.image, patch, c.snake, 1.0);
      const auto [eli, ema] = boundaryError(seg.smoothed, roi.truth);
      rows.push_back({eli, ema, seg.thickness.meanThickness,
                      measureThickness(roi.truth, 1.0).meanThickness});
      writeBoundaryCsv(dir / "boundaries" / ("roi" + std::to_string(i) + ".csv"), seg.smoothed,
                       c.dataset.pxToMm);
    }
    writeErrorsCsv(dir / "errors.csv", rows);
    for (const auto& row : rows) {
      cell.meanErrorLI += row[0] / static_cast<double>(rows.size());
      cell.meanErrorMA += row[1] / static_cast<double>(rows.size());
      cell.meanThickness += row[2] / static_cast<double>(rows.size());
    }
  }
  writeJson(dir / "cell.json", cellToJson(cell));
}

}  // namespace

RunReport runExperiment(const ExperimentConfig& config) {
  config.validate();
  RunReport report;
  report.directory = config.output;
  fs::create_directories(config.output);
  writeJson(config.output / "config.json", configToJson(config));

  const auto probe = experimentSpec(config, 2);
  const auto data = loadExperimentData(config.dataset, probe.inputShape());
  bool needsSource = false;
  for (const auto& p : config.plans) needsSource |= !makePlan(p, probe).scratch;
  std::optional<Source> source;
  std::string sourceError;
  if (needsSource) {
    try {
      source = prepareSource(config, config.output);
    } catch (const std::exception& e) {
      sourceError = std::string("source weights: ") + e.what();
    }
  }

  for (const auto& init : config.inits) {
    for (double fraction : config.trainFractions) {
      for (const auto& plan : config.plans) {
        CellResult cell;
        cell.plan = plan;
        cell.fraction = fraction;
        cell.init = init;
        cell.directory = "cells/" + cellName(plan, fraction, init);
        try {
          if (!sourceError.empty() && !makePlan(plan, probe).scratch) throw TransferError(sourceError);
          runCell(config, data, source, config.output, cell);
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.error = e.what();
          writeJson(config.output / cell.directory / "cell.json", cellToJson(cell));
        }
        report.cells.push_back(std::move(cell));
      }
    }
  }

  json run{{"evaluation", evaluationKindName(config.evaluation)},
           {"seed", config.seed},
           {"classCount", data.classCount},
           {"testUnits", data.testUnits},
           {"operatingPoints", config.operatingPoints},
           {"ok", report.ok()},
           {"cells", json::array()},
           {"artifacts", json::array()}};
  for (const auto& c : report.cells) run["cells"].push_back(cellToJson(c));
  std::vector<std::string> artifacts;
  for (const auto& entry : fs::recursive_directory_iterator(config.output)) {
    if (entry.is_regular_file()) {
      artifacts.push_back(fs::relative(entry.path(), config.output).generic_string());
    }
  }
  std::sort(artifacts.begin(), artifacts.end());
  run["artifacts"] = artifacts;
  writeJson(config.output / "run.json", run);
  return report;
}

// ---- report ----

Curve readCurveCsv(const fs::path& path, CurveKind kind) {
  const auto rows = readCsv(path);
  if (rows.empty() || rows[0] != std::vector<std::string>{"x", "y", "ciLo", "ciHi"}) {
    throw ReportError("unexpected curve header in " + path.string());
  }
  Curve c;
  c.kind = kind;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 4) throw ReportError("malformed curve row in " + path.string());
    CurvePoint p;
    p.x = std::stod(rows[i][0]);
    p.y = std::stod(rows[i][1]);
    p.ciLo = std::stod(rows[i][2]);
    p.ciHi = std::stod(rows[i][3]);
    c.points.push_back(p);
  }
  if (c.points.empty()) throw ReportError("empty curve in " + path.string());
  return c;
}

namespace {

void requireFile(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ReportError("missing artifact " + p.string());
}

// Operating points inside every curve's x range: the configured ones, or
// five evenly spaced points across the common range.
std::vector<double> operatingPoints(const std::vector<NamedCurve>& curves,
                                    const std::vector<double>& configured) {
  double lo = -1e300, hi = 1e300;
  for (const auto& c : curves) {
    lo = std::max(lo, c.curve.points.front().x);
    hi = std::min(hi, c.curve.points.back().x);
  }
  std::vector<double> xs;
  if (!configured.empty()) {
    for (double x : configured)
      if (x >= lo && x <= hi) xs.push_back(x);
    return xs;
  }
  if (hi <= lo) return xs;
  for (int k = 1; k <= 5; ++k) xs.push_back(lo + (hi - lo) * k / 6.0);
  return xs;
}

}  // namespace

void emitReport(const fs::path& runDir) {
  const fs::path runFile = runDir / "run.json";
  requireFile(runFile);
  json run;
  try {
    run = readJson(runFile);
  } catch (const IoError& e) {
    throw ReportError(e.what());
  }
  const std::string evaluation = run.value("evaluation", std::string("roc"));
  const CurveKind kind = evaluation == "froc" ? CurveKind::Froc : CurveKind::Roc;
  const auto configured = run.value("operatingPoints", std::vector<double>{});
  std::vector<CellResult> cells;
  for (const auto& j : run.at("cells")) cells.push_back(cellFromJson(j));

  const fs::path out = runDir / "report";
  fs::create_directories(out);

  // Summary of every cell, failed ones included.
  {
    std::ofstream s(out / "summary.csv");
    s << "cell,plan,fraction,init,ok,epochs,bestEpoch,bestValidationAuc,testAuc,error\n";
    for (const auto& c : cells) {
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      s << fs::path(c.directory).filename().string() << ',' << c.plan << ','
        << formatNumber(c.fraction) << ',' << c.init << ',' << (c.ok ? 1 : 0) << ',' << c.epochs
        << ',' << c.bestEpoch << ',' << formatNumber(c.bestValidationAuc) << ','
        << formatNumber(c.testAuc) << ',' << err << '\n';
    }
  }

  // Curves and significance per (fraction, init) group; convergence traces
  // per init so initializers can be compared.
  std::vector<std::pair<std::string, std::vector<const CellResult*>>> groups;
  std::vector<std::pair<std::string, std::vector<const CellResult*>>> byInit;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    const auto g = groupName(c.fraction, c.init);
    auto it = std::find_if(groups.begin(), groups.end(), [&](auto& p) { return p.first == g; });
    if (it == groups.end()) it = groups.insert(groups.end(), {g, {}});
    it->second.push_back(&c);
    auto jt = std::find_if(byInit.begin(), byInit.end(), [&](auto& p) { return p.first == c.init; });
    if (jt == byInit.end()) jt = byInit.insert(byInit.end(), {c.init, {}});
    jt->second.push_back(&c);
  }

  const bool froc = kind == CurveKind::Froc;
  for (const auto& [name, members] : groups) {
    std::vector<NamedCurve> curves;
    for (const auto* c : members) {
      const fs::path cf = runDir / c->directory / "curve.csv";
      requireFile(cf);
      curves.push_back({c->plan, readCurveCsv(cf, kind)});
      writeCurveCsv(out / "curves" / (fs::path(c->directory).filename().string() + ".csv"),
                    curves.back().curve);
    }
    writeCurvesSvg(out / ("curves_" + name + ".svg"), curves,
                   {(froc ? "FROC " : "ROC ") + name, froc ? "false positives per unit" : "1 - specificity",
                    "sensitivity"});
    const auto xs = operatingPoints(curves, configured);
    writeSignificanceCsv(out / ("significance_" + name + ".csv"), significanceMatrix(curves, xs));
  }

  for (const auto& [init, members] : byInit) {
    std::vector<NamedCurve> traces;
    for (const auto* c : members) {
      const fs::path cf = runDir / c->directory / "convergence.csv";
      requireFile(cf);
      const auto rows = readCsv(cf);
      const auto cellDir = fs::path(c->directory).filename().string();
      fs::create_directories(out / "convergence");
      std::ofstream t(out / "convergence" / (cellDir + ".csv"));
      t << "epoch,validationAuc\n";
      Curve trace;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        t << rows[i].at(0) << ',' << rows[i].at(1) << '\n';
        const double e = std::stod(rows[i][0]), a = std::stod(rows[i][1]);
        trace.points.push_back({e, a, a, a, 0.0});
      }
      if (trace.points.size() != c->epochs) {
        throw ReportError("convergence trace of " + cellDir + " does not match its epoch count");
      }
      traces.push_back({c->plan + " f=" + formatNumber(c->fraction), std::move(trace)});
    }
    writeCurvesSvg(out / ("convergence_" + init + ".svg"), traces,
                   {"validation AUC (" + init + ")", "epoch", "AUC"});
  }

  if (evaluation == "segmentation") {
    std::vector<std::pair<std::string, BoxStats>> boxes;
    for (const auto& c : cells) {
      if (!c.ok) continue;
      const fs::path ef = runDir / c.directory / "errors.csv";
      requireFile(ef);
      const auto rows = readCsv(ef);
      std::vector<double> li, ma, th;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        li.push_back(std::stod(rows[i].at(1)));
        ma.push_back(std::stod(rows[i].at(2)));
        th.push_back(std::stod(rows[i].at(3)) - std::stod(rows[i].at(4)));
      }
      if (li.size() < 4) continue;
      const auto cellDir = fs::path(c.directory).filename().string();
      boxes.push_back({cellDir + "/errorLI", tukeyBox(li)});
      boxes.push_back({cellDir + "/errorMA", tukeyBox(ma)});
      boxes.push_back({cellDir + "/thicknessError", tukeyBox(th)});
    }
    writeBoxCsv(out / "boxes.csv", boxes);
  }
}

}  // namespace ftcnn
