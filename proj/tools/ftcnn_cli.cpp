#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "ftcnn/error.hpp"
#include "ftcnn/experiment.hpp"

namespace fs = std::filesystem;
using namespace ftcnn;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> patience;
  std::optional<double> alpha;
  std::optional<std::size_t> batchSize;
  std::vector<std::string> plans;
  std::vector<double> fractions;
  std::vector<std::string> inits;
  std::string evaluation;
  std::string source;
  std::string architecture;
};

void addRunFlags(CLI::App* cmd, Overrides& o, bool seedRequired) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory (overrides config output)");
  auto* seed = cmd->add_option("--seed", o.seed, "run seed");
  if (seedRequired) seed->required();
  cmd->add_option("--epochs", o.epochs, "epoch cap");
  cmd->add_option("--patience", o.patience, "early-stopping patience");
  cmd->add_option("--alpha", o.alpha, "base learning rate");
  cmd->add_option("--batch-size", o.batchSize, "mini-batch size");
  cmd->add_option("--plans", o.plans, "plan names");
  cmd->add_option("--fractions", o.fractions, "training fractions");
  cmd->add_option("--inits", o.inits, "initializers (gaussian, xavier, msra)");
  cmd->add_option("--evaluation", o.evaluation, "roc, froc or segmentation");
  cmd->add_option("--source", o.source, "source checkpoint for fine-tuning");
  cmd->add_option("--architecture", o.architecture, "architecture table file or 'alexnet'");
}

ExperimentConfig applyOverrides(const Overrides& o) {
  auto c = loadExperimentConfig(o.config);
  if (!o.out.empty()) c.output = o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.patience) c.patience = *o.patience;
  if (o.alpha) c.schedule.alpha = *o.alpha;
  if (o.batchSize) c.schedule.batchSize = *o.batchSize;
  if (!o.plans.empty()) c.plans = o.plans;
  if (!o.fractions.empty()) c.trainFractions = o.fractions;
  if (!o.inits.empty()) c.inits = o.inits;
  if (!o.evaluation.empty()) c.evaluation = parseEvaluationKind(o.evaluation);
  if (!o.source.empty()) c.source.checkpoint = o.source;
  if (!o.architecture.empty()) c.architecture = o.architecture;
  return c;
}

int finish(const RunReport& report) {
  for (const auto& c : report.cells) {
    if (c.ok) {
      std::printf("%-24s f=%-5g %-8s epochs=%zu best=%zu test=%.4f\n", c.plan.c_str(),
                  c.fraction, c.init.c_str(), c.epochs, c.bestEpoch, c.testAuc);
    } else {
      std::printf("%-24s f=%-5g %-8s FAILED: %s\n", c.plan.c_str(), c.fraction, c.init.c_str(),
                  c.error.c_str());
    }
  }
  std::printf("artifacts in %s\n", report.directory.string().c_str());
  return report.ok() ? 0 : 1;
}

int evaluateVerb(const std::string& checkpoint, const std::string& configPath,
                 const std::string& outDir, const std::string& evaluation) {
  const auto ckpt = loadCheckpoint(checkpoint);
  auto c = loadExperimentConfig(configPath);
  if (!evaluation.empty()) c.evaluation = parseEvaluationKind(evaluation);
  const auto data = loadExperimentData(c.dataset, ckpt.spec.inputShape());
  const auto ev = evaluateOnTest(ckpt.net, ckpt.spec, data.test, c.evaluation, data.testUnits);
  const fs::path out = outDir;
  writeCurveCsv(out / "curve.csv", ev.curve);
  std::ofstream s(out / "scores.csv");
  s << "group,unit,label,score\n";
  for (const auto& r : ev.records) {
    s << r.groupId << ',' << r.unitId << ',' << r.label << ',' << formatNumber(r.meanScore) << '\n';
  }
  std::ofstream sum(out / "summary.csv");
  sum << "evaluation,area,groups,units\n"
      << evaluationKindName(c.evaluation) << ',' << formatNumber(ev.area) << ','
      << ev.records.size() << ',' << data.testUnits << '\n';
  std::printf("area under %s curve: %.6f (%zu groups)\n", evaluationKindName(c.evaluation).c_str(),
              ev.area, ev.records.size());
  return 0;
}

int segmentVerb(const std::string& checkpoint, const std::string& configPath,
                const std::string& image, const std::string& outDir, double pxToMm) {
  const auto ckpt = loadCheckpoint(checkpoint);
  const std::size_t patch = ckpt.spec.inputShape().at(1);
  const fs::path out = outDir;
  SnakeParams snake;
  if (!configPath.empty()) snake = loadExperimentConfig(configPath).snake;
  if (!image.empty()) {
    const Tensor roi = readPnm(image);
    const auto seg = segmentRoi(ckpt.net, ckpt.spec, roi, patch, snake, pxToMm);
    writeBoundaryCsv(out / "boundary.csv", seg.smoothed, pxToMm);
    writeBoundaryCsv(out / "boundary_raw.csv", seg.raw, pxToMm);
    writeMapPgm(out / "map_li.pgm", seg.maps.mapLI);
    writeMapPgm(out / "map_ma.pgm", seg.maps.mapMA);
    writeMergedMapPpm(out / "maps.ppm", seg.maps);
    std::printf("mean thickness %.4f mm%s\n", seg.thickness.meanThickness,
                seg.thickness.crossed ? " (boundaries cross)" : "");
    return 0;
  }
  if (configPath.empty()) throw ConfigError("segment needs --image or --config");
  const auto c = loadExperimentConfig(configPath);
  if (c.dataset.kind != "synthetic-cimt") throw ConfigError("segment --config needs a synthetic-cimt dataset");
  auto d = c.dataset;
  d.trainRois = 0;
  const auto data = loadExperimentData(d, ckpt.spec.inputShape());
  fs::create_directories(out);
  std::ofstream errors(out / "errors.csv");
  errors << "roi,errorLI,errorMA,thickness,trueThickness\n";
  for (std::size_t i = 0; i < data.testRois.size(); ++i) {
    const auto& roi = data.testRois[i];
    const auto seg = segmentRoi(ckpt.net, ckpt.spec, roi.image, patch, snake, 1.0);
    const auto [li, ma] = boundaryError(seg.smoothed, roi.truth);
    writeBoundaryCsv(out / "boundaries" / ("roi" + std::to_string(i) + ".csv"), seg.smoothed, pxToMm);
    errors << i << ',' << formatNumber(li) << ',' << formatNumber(ma) << ','
           << formatNumber(seg.thickness.meanThickness) << ','
           << formatNumber(measureThickness(roi.truth, 1.0).meanThickness) << '\n';
  }
  std::printf("segmented %zu ROIs\n", data.testRois.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, fine-tune and evaluate small CNNs for medical-image style tasks"};
  app.require_subcommand(1);

  Overrides trainOpts, finetuneOpts, sweepOpts;
  auto* train = app.add_subcommand("train", "train one network from scratch at full data");
  addRunFlags(train, trainOpts, true);
  auto* finetune = app.add_subcommand("finetune", "fine-tune source weights under the config's plans");
  addRunFlags(finetune, finetuneOpts, true);
  auto* sweep = app.add_subcommand("sweep", "run every plan x fraction x init cell and emit the report");
  addRunFlags(sweep, sweepOpts, true);

  std::string evalCkpt, evalConfig, evalOut, evalKind;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the config's test set");
  evaluate->add_option("--checkpoint", evalCkpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--config", evalConfig, "experiment config")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", evalOut, "output directory")->required();
  evaluate->add_option("--evaluation", evalKind, "roc or froc");

  std::string segCkpt, segConfig, segImage, segOut;
  double pxToMm = 0.1;
  auto* segment = app.add_subcommand("segment", "segment interface boundaries in ROIs");
  segment->add_option("--checkpoint", segCkpt, "3-class checkpoint")->required()->check(CLI::ExistingFile);
  segment->add_option("--config", segConfig, "synthetic-cimt config (test ROIs, snake)")->check(CLI::ExistingFile);
  segment->add_option("--image", segImage, "PGM/PPM ROI")->check(CLI::ExistingFile);
  segment->add_option("--out", segOut, "output directory")->required();
  segment->add_option("--px-to-mm", pxToMm, "pixel size in mm");

  std::string runDir;
  auto* report = app.add_subcommand("report", "write the report bundle of a finished run");
  report->add_option("--run", runDir, "run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      auto c = applyOverrides(trainOpts);
      c.plans = {"scratch"};
      c.trainFractions = {1.0};
      c.inits.resize(1);
      return finish(runExperiment(c));
    }
    if (finetune->parsed()) return finish(runExperiment(applyOverrides(finetuneOpts)));
    if (sweep->parsed()) {
      const auto r = runExperiment(applyOverrides(sweepOpts));
      emitReport(r.directory);
      return finish(r);
    }
    if (evaluate->parsed()) return evaluateVerb(evalCkpt, evalConfig, evalOut, evalKind);
    if (segment->parsed()) return segmentVerb(segCkpt, segConfig, segImage, segOut, pxToMm);
    if (report->parsed()) {
      emitReport(runDir);
      std::printf("report written to %s\n", (fs::path(runDir) / "report").string().c_str());
      return 0;
    }
  } catch (const ftcnn::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 3;
  }
  return 0;
}
