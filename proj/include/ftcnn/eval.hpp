#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ftcnn/data.hpp"
#include "ftcnn/tensor.hpp"

namespace ftcnn {

/// (lo, hi) bounds for a proportion k/n at the given confidence level.
using CiMethod = std::function<std::pair<double, double>(std::size_t k, std::size_t n, double level)>;

/// Wilson score interval; exact 0 / 1 at the boundaries.
std::pair<double, double> sensitivityCI(std::size_t k, std::size_t n, double level = 0.95);

struct CurvePoint {
  double x = 0.0;  // FP rate (ROC) or FPs per unit (FROC)
  double y = 0.0;  // sensitivity
  double ciLo = 0.0;
  double ciHi = 0.0;
  double threshold = 0.0;  // score cut producing this point (+inf for the origin)
};

enum class CurveKind { Roc, Froc };

struct Curve {
  CurveKind kind = CurveKind::Roc;
  std::vector<CurvePoint> points;  // ascending in x
  std::size_t nUnits = 0;
  std::size_t nPositives = 0;  // positive samples (ROC) or unique lesions (FROC)
};

/// One point per distinct score (score >= threshold counts as positive),
/// preceded by the origin.
Curve rocCurve(std::span<const double> scores, std::span<const int> labels,
               const CiMethod& ci = sensitivityCI, double level = 0.95);

/// Trapezoid rule over the curve's points.
double auc(const Curve& curve);

/// rocCurve + auc.
double rocAuc(std::span<const double> scores, std::span<const int> labels);

/// Lesion-level sensitivity against false-positive groups per unit. A
/// lesion counts as detected when any of its groups reaches the threshold.
Curve frocCurve(std::span<const GroupRecord> records, std::size_t nUnits,
                const CiMethod& ci = sensitivityCI, double level = 0.95);

/// Sensitivity and FPs per unit at one threshold, with the rules above.
std::pair<double, double> frocAt(std::span<const GroupRecord> records, std::size_t nUnits,
                                 double threshold);

enum class Interpolation { Linear, Step };

/// Curve value at x. Within a run of equal x the last (highest) point wins;
/// between points y and the CI bounds are interpolated. Throws
/// EvaluationError outside [first x, last x].
CurvePoint curveAt(const Curve& curve, double x, Interpolation interp = Interpolation::Linear);

/// true where the closed CI intervals at x are disjoint.
std::vector<bool> compareAtOperatingPoints(const Curve& a, const Curve& b,
                                           std::span<const double> xs,
                                           Interpolation interp = Interpolation::Linear);

struct NamedCurve {
  std::string name;
  Curve curve;
};

/// cells[i][j] lists the xs where curves i and j differ significantly.
struct SignificanceMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<std::vector<double>>> cells;
};

SignificanceMatrix significanceMatrix(std::span<const NamedCurve> curves,
                                      std::span<const double> xs,
                                      Interpolation interp = Interpolation::Linear);

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whiskerLo = 0.0;
  double whiskerHi = 0.0;
  std::vector<double> outliers;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) standard deviation
};

/// Quartiles by linear interpolation between order statistics; whiskers at
/// the most extreme values within 1.5 IQR of the quartiles.
BoxStats tukeyBox(std::span<const double> values);

/// Tracks the validation AUC per epoch. Stops once `patience` consecutive
/// epochs fail to beat the running maximum (patience 0 stops at the first
/// such epoch).
class EarlyStopMonitor {
 public:
  explicit EarlyStopMonitor(std::size_t patience = 5) : patience_(patience) {}

  /// Records the next epoch and returns true when training should stop.
  bool update(double validationAuc);

  bool stopped() const { return stopped_; }
  std::size_t epochs() const { return history_.size(); }
  std::size_t bestEpoch() const { return bestEpoch_; }  // 1-based, 0 before any update
  double bestAuc() const { return bestAuc_; }
  const std::vector<double>& history() const { return history_; }

 private:
  std::size_t patience_;
  std::vector<double> history_;
  std::size_t bestEpoch_ = 0;
  double bestAuc_ = 0.0;
  std::size_t nonImproving_ = 0;
  bool stopped_ = false;
};

/// Positive-class score per sample: p(class 1) for two classes, and
/// p(class 1) + p(class 2) for three (the two interface classes merged).
std::vector<double> positiveScores(const Tensor& probs);
/// Labels with every non-zero class mapped to 1.
std::vector<int> mergedLabels(std::span<const int> labels);

// ---- export ----

std::string formatNumber(double v);

void writeCurveCsv(const std::filesystem::path& path, const Curve& curve);
void writeSignificanceCsv(const std::filesystem::path& path, const SignificanceMatrix& m);
void writeBoxCsv(const std::filesystem::path& path,
                 std::span<const std::pair<std::string, BoxStats>> boxes);

struct PlotLabels {
  std::string title;
  std::string xLabel;
  std::string yLabel;
};

/// Line plot of several curves with vertical CI bars at every point.
void writeCurvesSvg(const std::filesystem::path& path, std::span<const NamedCurve> curves,
                    const PlotLabels& labels);

}  // namespace ftcnn
