#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftcnn/data.hpp"
#include "ftcnn/eval.hpp"
#include "ftcnn/nn.hpp"
#include "ftcnn/optim.hpp"
#include "ftcnn/segpipe.hpp"
#include "ftcnn/synthetic.hpp"
#include "ftcnn/transfer.hpp"

namespace ftcnn {

// ---- checkpoints ----

/// Snapshot of a trained network. On disk: the magic "FTCK", a u64 header
/// length, a JSON header (architecture table, spec hash, iteration, epoch,
/// validation AUC, layer names) and then weights and bias of every layer as
/// binary tensors.
struct Checkpoint {
  ArchitectureSpec spec;
  NetworkState net;
  std::uint64_t iteration = 0;
  std::size_t epoch = 0;
  double validationAuc = 0.0;
};

/// 64-bit FNV-1a of the formatted architecture table.
std::uint64_t specHash(const ArchitectureSpec& spec);

void saveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError on a malformed file and InferenceError when the stored
/// hash or tensors disagree with the stored table.
Checkpoint loadCheckpoint(const std::filesystem::path& path);

// ---- training ----

struct TrainOptions {
  std::size_t maxEpochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
};

struct TrainResult {
  NetworkState best;  // weights after the best validation epoch
  std::size_t bestEpoch = 0;
  double bestAuc = 0.0;
  std::vector<double> validationAuc;  // one per epoch run
  std::vector<double> trainLoss;      // mean batch loss per epoch
  std::uint64_t iterations = 0;
};

/// Softmax outputs (N, classes) for a whole set, in batches.
Tensor predictSet(const NetworkState& net, const ArchitectureSpec& spec, const LabeledPatchSet& set,
                  std::size_t batchSize = 256);

/// Validation measure used for early stopping. With two or three classes it
/// is the group-level ROC AUC of the merged positive score; with more classes
/// the mean one-vs-rest patch-level AUC.
double validationAuc(const NetworkState& net, const ArchitectureSpec& spec,
                     const LabeledPatchSet& set);

/// Mini-batch momentum SGD with per-epoch reshuffling. Layers the plan
/// freezes get neither gradients nor updates. The schedule's batch size is
/// used as is; its epoch length is set to the training set size.
TrainResult trainNetwork(NetworkState net, const ArchitectureSpec& spec, const FineTunePlan& plan,
                         LearningSchedule schedule, const LabeledPatchSet& train,
                         const LabeledPatchSet& validation, const TrainOptions& options);

// ---- experiments ----

enum class EvaluationKind { Roc, Froc, Segmentation };

struct DatasetConfig {
  /// "synthetic-shapes" (2 classes, groups of views), "synthetic-patterns"
  /// (4 classes), "synthetic-cimt" (3-class interface patches) or
  /// "manifest" (patch directories written by savePatchSet).
  std::string kind = "synthetic-shapes";
  std::uint64_t seed = 1;
  std::size_t units = 20;
  std::size_t groupsPerUnit = 20;
  std::size_t testUnits = 10;
  std::size_t count = 2000;  // synthetic-patterns, training pool
  std::size_t testCount = 500;
  std::size_t patchSize = 32;
  double noise = 0.25;
  // synthetic-cimt
  std::size_t trainRois = 10;
  std::size_t testRois = 20;
  std::size_t perInterface = 100;
  std::size_t background = 200;
  std::size_t roiHeight = 60;
  std::size_t roiWidth = 92;
  double offsetPx = 6.0;
  double farDistance = kDefaultFarDistance;
  double pxToMm = 0.1;
  // manifest
  std::filesystem::path train;
  std::filesystem::path test;
};

/// Learning parameters shared by every cell before a plan is applied.
struct ScheduleConfig {
  double mu = 0.9;
  double gamma = 0.95;
  double alpha = 0.001;
  std::map<std::string, double> alphaPerLayer;  // overrides alpha per layer
  double biasMultiplier = 2.0;
  double headMultiplier = kHeadRateMultiplier;
  std::size_t batchSize = 32;
};

/// Weights fine-tuning plans start from: a checkpoint, or a network trained
/// here on the synthetic pattern task.
struct SourceConfig {
  std::optional<std::filesystem::path> checkpoint;
  bool pretrain = false;
  std::size_t count = 2000;
  std::size_t epochs = 10;
  double alpha = 0.01;
  double noise = 0.25;
  std::string init = "xavier";
  std::uint64_t seed = 11;
};

struct ExperimentConfig {
  std::filesystem::path architecture;  // table file; "alexnet" selects the built-in table
  ScheduleConfig schedule;
  std::vector<std::string> plans{"scratch"};
  std::vector<std::string> inits{"gaussian"};
  std::vector<double> trainFractions{1.0};
  double trainSplit = 0.8;  // units kept for training; the rest validate
  std::size_t epochs = 30;
  std::size_t patience = 5;
  EvaluationKind evaluation = EvaluationKind::Roc;
  std::vector<double> operatingPoints;
  DatasetConfig dataset;
  SourceConfig source;
  SnakeParams snake;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::filesystem::path output = "run";

  /// Throws ConfigError on a violated invariant: missing files, fractions
  /// outside (0,1], unknown plan, initializer or evaluation names.
  void validate() const;
};

/// Relative paths in the file resolve against `baseDir`.
ExperimentConfig configFromJson(const nlohmann::json& j,
                                const std::filesystem::path& baseDir = {});
nlohmann::json configToJson(const ExperimentConfig& config);
ExperimentConfig loadExperimentConfig(const std::filesystem::path& path);

/// Architecture of the config with the dataset's class count.
ArchitectureSpec experimentSpec(const ExperimentConfig& config, std::size_t classCount);

/// Training pool and held-out test data described by a DatasetConfig.
struct ExperimentData {
  LabeledPatchSet pool;
  LabeledPatchSet test;
  std::size_t classCount = 2;
  std::size_t testUnits = 0;
  std::vector<synth::CimtRoi> testRois;  // synthetic-cimt only
};

/// Synthetic generators draw patches of `input` = (C,S,S).
ExperimentData loadExperimentData(const DatasetConfig& dataset, const Shape& input);

/// Keeps round(fraction * U) of the U units (at least 2), chosen by a seeded
/// permutation that is the same for every fraction, so smaller fractions
/// keep subsets of the units larger ones keep.
LabeledPatchSet reduceUnits(const LabeledPatchSet& set, double fraction, std::uint64_t seed);

struct TestEvaluation {
  Curve curve;
  double area = 0.0;  // trapezoid area under `curve`
  std::vector<GroupRecord> records;
};

/// Group-level ROC, or FROC over `testUnits` units.
TestEvaluation evaluateOnTest(const NetworkState& net, const ArchitectureSpec& spec,
                              const LabeledPatchSet& test, EvaluationKind kind,
                              std::size_t testUnits);

EvaluationKind parseEvaluationKind(std::string_view name);
std::string evaluationKindName(EvaluationKind kind);

struct CellResult {
  std::string plan;
  double fraction = 1.0;
  std::string init;
  std::string directory;  // relative to the run directory
  bool ok = false;
  std::string error;
  std::size_t epochs = 0;
  std::size_t bestEpoch = 0;
  double bestValidationAuc = 0.0;
  double testAuc = 0.0;  // ROC AUC (roc, segmentation) or area under the FROC curve
  std::vector<std::string> trainUnits;
  std::vector<double> validationTrace;
  // segmentation only
  double meanErrorLI = 0.0;
  double meanErrorMA = 0.0;
  double meanThickness = 0.0;
};

struct RunReport {
  std::filesystem::path directory;
  std::vector<CellResult> cells;
  bool ok() const;
};

/// Runs every init x plan x fraction cell under config.output. A failing
/// cell is recorded with its error message and the sweep continues.
/// Writes config.json, a per-cell directory with checkpoint, curve and
/// convergence trace, and run.json.
RunReport runExperiment(const ExperimentConfig& config);

/// Reads run.json and the cell artifacts under `runDir` and writes
/// report/: curves (CSV and SVG), significance matrices, convergence traces
/// and, for segmentation runs, boxplot statistics. Throws ReportError naming
/// the first missing artifact.
void emitReport(const std::filesystem::path& runDir);

/// Reads a curve written by writeCurveCsv.
Curve readCurveCsv(const std::filesystem::path& path, CurveKind kind);

}  // namespace ftcnn
