#include "ftcnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "ftcnn/error.hpp"

namespace ftcnn {

std::pair<double, double> sensitivityCI(std::size_t k, std::size_t n, double level) {
  if (n == 0 || k > n) {
    throw EvaluationError("confidence interval needs 0 <= k <= n and n >= 1 (k=" +
                          std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  if (!(level > 0.0 && level < 1.0)) throw EvaluationError("confidence level must be in (0, 1)");
  const double z =
      boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + level / 2.0);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  double lo = std::clamp(center - half, 0.0, p);
  double hi = std::clamp(center + half, p, 1.0);
  if (k == 0) lo = 0.0;
  if (k == n) hi = 1.0;
  return {lo, hi};
}

namespace {

void checkScores(std::span<const double> scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw EvaluationError("scores must be finite");
  }
}

CurvePoint makePoint(double x, std::size_t k, std::size_t n, double threshold, const CiMethod& ci,
                     double level) {
  CurvePoint p;
  p.x = x;
  p.y = static_cast<double>(k) / static_cast<double>(n);
  std::tie(p.ciLo, p.ciHi) = ci(k, n, level);
  p.threshold = threshold;
  return p;
}

}  // namespace

Curve rocCurve(std::span<const double> scores, std::span<const int> labels, const CiMethod& ci,
               double level) {
  if (scores.size() != labels.size()) {
    throw EvaluationError("got " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(labels.size()) + " labels");
  }
  checkScores(scores);
  std::size_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l == 1) {
      ++pos;
    } else if (l == 0) {
      ++neg;
    } else {
      throw EvaluationError("ROC labels must be 0 or 1, got " + std::to_string(l));
    }
  }
  if (pos == 0 || neg == 0) {
    throw EvaluationError("ROC analysis needs both classes (" + std::to_string(pos) +
                          " positives, " + std::to_string(neg) + " negatives)");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Curve curve;
  curve.kind = CurveKind::Roc;
  curve.nPositives = pos;
  curve.points.push_back(makePoint(0.0, 0, pos, std::numeric_limits<double>::infinity(), ci, level));
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    curve.points.push_back(makePoint(static_cast<double>(fp) / static_cast<double>(neg), tp, pos, t,
                                     ci, level));
  }
  return curve;
}

double auc(const Curve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.x - a.x) * (a.y + b.y) / 2.0;
  }
  return area;
}

double rocAuc(std::span<const double> scores, std::span<const int> labels) {
  return auc(rocCurve(scores, labels));
}

namespace {

struct FrocIndex {
  std::vector<double> lesionMax;  // best score per unique lesion
  std::vector<double> negatives;
};

FrocIndex indexRecords(std::span<const GroupRecord> records, std::size_t nUnits) {
  if (nUnits == 0) throw EvaluationError("FROC needs at least one unit");
  std::map<std::string, double> lesions;
  FrocIndex idx;
  for (const auto& r : records) {
    if (!std::isfinite(r.meanScore)) throw EvaluationError("scores must be finite");
    if (r.label != 0) {
      // A positive group without a lesion id stands for its own lesion.
      const std::string key = r.lesionId ? "L:" + *r.lesionId : "G:" + r.groupId;
      auto [it, inserted] = lesions.try_emplace(key, r.meanScore);
      if (!inserted) it->second = std::max(it->second, r.meanScore);
    } else {
      idx.negatives.push_back(r.meanScore);
    }
  }
  if (lesions.empty()) throw EvaluationError("FROC analysis needs at least one lesion");
  for (const auto& [k, v] : lesions) idx.lesionMax.push_back(v);
  return idx;
}

}  // namespace

std::pair<double, double> frocAt(std::span<const GroupRecord> records, std::size_t nUnits,
                                 double threshold) {
  const auto idx = indexRecords(records, nUnits);
  const auto detected = std::count_if(idx.lesionMax.begin(), idx.lesionMax.end(),
                                      [&](double s) { return s >= threshold; });
  const auto fps = std::count_if(idx.negatives.begin(), idx.negatives.end(),
                                 [&](double s) { return s >= threshold; });
  return {static_cast<double>(detected) / static_cast<double>(idx.lesionMax.size()),
          static_cast<double>(fps) / static_cast<double>(nUnits)};
}

Curve frocCurve(std::span<const GroupRecord> records, std::size_t nUnits, const CiMethod& ci,
                double level) {
  auto idx = indexRecords(records, nUnits);
  std::vector<double> thresholds;
  thresholds.reserve(records.size());
  for (const auto& r : records) thresholds.push_back(r.meanScore);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::sort(idx.lesionMax.begin(), idx.lesionMax.end(), std::greater<>());
  std::sort(idx.negatives.begin(), idx.negatives.end(), std::greater<>());

  Curve curve;
  curve.kind = CurveKind::Froc;
  curve.nUnits = nUnits;
  const std::size_t lesions = idx.lesionMax.size();
  curve.nPositives = lesions;
  curve.points.push_back(
      makePoint(0.0, 0, lesions, std::numeric_limits<double>::infinity(), ci, level));
  std::size_t detected = 0, fps = 0;
  for (double t : thresholds) {
    while (detected < lesions && idx.lesionMax[detected] >= t) ++detected;
    while (fps < idx.negatives.size() && idx.negatives[fps] >= t) ++fps;
    curve.points.push_back(makePoint(static_cast<double>(fps) / static_cast<double>(nUnits),
                                     detected, lesions, t, ci, level));
  }
  return curve;
}

CurvePoint curveAt(const Curve& curve, double x, Interpolation interp) {
  const auto& pts = curve.points;
  if (pts.empty() || x < pts.front().x || x > pts.back().x || !std::isfinite(x)) {
    throw EvaluationError("operating point " + std::to_string(x) + " is outside the curve's range");
  }
  // Last point with px <= x.
  auto it = std::upper_bound(pts.begin(), pts.end(), x,
                             [](double v, const CurvePoint& p) { return v < p.x; });
  const std::size_t i = static_cast<std::size_t>(it - pts.begin()) - 1;
  const CurvePoint& a = pts[i];
  if (a.x == x || interp == Interpolation::Step || i + 1 == pts.size()) {
    CurvePoint out = a;
    out.x = x;
    return out;
  }
  const CurvePoint& b = pts[i + 1];
  const double f = (x - a.x) / (b.x - a.x);
  CurvePoint out;
  out.x = x;
  out.y = a.y + f * (b.y - a.y);
  out.ciLo = a.ciLo + f * (b.ciLo - a.ciLo);
  out.ciHi = a.ciHi + f * (b.ciHi - a.ciHi);
  out.threshold = a.threshold + f * (b.threshold - a.threshold);
  return out;
}

std::vector<bool> compareAtOperatingPoints(const Curve& a, const Curve& b,
                                           std::span<const double> xs, Interpolation interp) {
  std::vector<bool> out;
  out.reserve(xs.size());
  for (double x : xs) {
    const auto pa = curveAt(a, x, interp);
    const auto pb = curveAt(b, x, interp);
    out.push_back(pa.ciHi < pb.ciLo || pb.ciHi < pa.ciLo);
  }
  return out;
}

SignificanceMatrix significanceMatrix(std::span<const NamedCurve> curves,
                                      std::span<const double> xs, Interpolation interp) {
  SignificanceMatrix m;
  const std::size_t n = curves.size();
  m.cells.assign(n, std::vector<std::vector<double>>(n));
  for (const auto& c : curves) m.names.push_back(c.name);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto verdict = compareAtOperatingPoints(curves[i].curve, curves[j].curve, xs, interp);
      for (std::size_t k = 0; k < xs.size(); ++k) {
        if (verdict[k]) {
          m.cells[i][j].push_back(xs[k]);
          m.cells[j][i].push_back(xs[k]);
        }
      }
    }
  }
  return m;
}

namespace {

double quantileType7(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

BoxStats tukeyBox(std::span<const double> values) {
  if (values.size() < 4) {
    throw EvaluationError("box statistics need at least 4 values, got " +
                          std::to_string(values.size()));
  }
  checkScores(values);
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  BoxStats b;
  b.median = quantileType7(v, 0.5);
  b.q1 = quantileType7(v, 0.25);
  b.q3 = quantileType7(v, 0.75);
  const double iqr = b.q3 - b.q1;
  const double loFence = b.q1 - 1.5 * iqr, hiFence = b.q3 + 1.5 * iqr;
  b.whiskerLo = b.q1;
  b.whiskerHi = b.q3;
  for (double x : v) {
    if (x < loFence || x > hiFence) {
      b.outliers.push_back(x);
    } else {
      b.whiskerLo = std::min(b.whiskerLo, x);
      b.whiskerHi = std::max(b.whiskerHi, x);
    }
  }
  const double n = static_cast<double>(v.size());
  b.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : values) ss += (x - b.mean) * (x - b.mean);
  b.stddev = std::sqrt(ss / (n - 1.0));
  return b;
}

bool EarlyStopMonitor::update(double validationAuc) {
  history_.push_back(validationAuc);
  if (bestEpoch_ == 0 || validationAuc > bestAuc_) {
    bestAuc_ = validationAuc;
    bestEpoch_ = history_.size();
    nonImproving_ = 0;
  } else {
    ++nonImproving_;
  }
  if (nonImproving_ > 0 && nonImproving_ >= patience_) stopped_ = true;
  return stopped_;
}

std::vector<double> positiveScores(const Tensor& probs) {
  if (probs.rank() != 2 || probs.extent(1) < 2 || probs.extent(1) > 3) {
    throw EvaluationError("expected (B,2) or (B,3) probabilities, got " +
                          shapeToString(probs.shape()));
  }
  std::vector<double> out(probs.extent(0));
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = probs.at(n, 1) + (probs.extent(1) == 3 ? probs.at(n, 2) : 0.0);
  }
  return out;
}

std::vector<int> mergedLabels(std::span<const int> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(l != 0 ? 1 : 0);
  return out;
}

// ---- export ----

std::string formatNumber(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {

std::ofstream openForWrite(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string escapeXml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void writeCurveCsv(const std::filesystem::path& path, const Curve& curve) {
  auto out = openForWrite(path);
  out << "x,y,ciLo,ciHi\n";
  for (const auto& p : curve.points) {
    out << formatNumber(p.x) << ',' << formatNumber(p.y) << ',' << formatNumber(p.ciLo) << ','
        << formatNumber(p.ciHi) << '\n';
  }
}

void writeSignificanceCsv(const std::filesystem::path& path, const SignificanceMatrix& m) {
  auto out = openForWrite(path);
  out << "plan";
  for (const auto& n : m.names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    out << m.names[i];
    for (std::size_t j = 0; j < m.names.size(); ++j) {
      out << ',';
      if (i == j) {
        out << '-';
        continue;
      }
      for (std::size_t k = 0; k < m.cells[i][j].size(); ++k) {
        if (k) out << ';';
        out << formatNumber(m.cells[i][j][k]);
      }
    }
    out << '\n';
  }
}

void writeBoxCsv(const std::filesystem::path& path,
                 std::span<const std::pair<std::string, BoxStats>> boxes) {
  auto out = openForWrite(path);
  out << "name,median,q1,q3,whiskerLo,whiskerHi,mean,stddev,outliers\n";
  for (const auto& [name, b] : boxes) {
    out << name << ',' << formatNumber(b.median) << ',' << formatNumber(b.q1) << ','
        << formatNumber(b.q3) << ',' << formatNumber(b.whiskerLo) << ','
        << formatNumber(b.whiskerHi) << ',' << formatNumber(b.mean) << ','
        << formatNumber(b.stddev) << ',';
    for (std::size_t k = 0; k < b.outliers.size(); ++k) {
      if (k) out << ';';
      out << formatNumber(b.outliers[k]);
    }
    out << '\n';
  }
}

void writeCurvesSvg(const std::filesystem::path& path, std::span<const NamedCurve> curves,
                    const PlotLabels& labels) {
  constexpr double kW = 640, kH = 480, kLeft = 60, kRight = 180, kTop = 40, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  double maxX = 0.0;
  for (const auto& c : curves) {
    for (const auto& p : c.curve.points) maxX = std::max(maxX, p.x);
  }
  if (maxX <= 0.0) maxX = 1.0;
  const double plotW = kW - kLeft - kRight, plotH = kH - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + x / maxX * plotW; };
  auto sy = [&](double y) { return kTop + (1.0 - y) * plotH; };

  auto out = openForWrite(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\">" << escapeXml(labels.title)
      << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plotW << "\" height=\""
      << plotH << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = maxX * k / 4.0, fy = k / 4.0;
    out << "<text x=\"" << sx(fx) << "\" y=\"" << kTop + plotH + 16
        << "\" text-anchor=\"middle\">" << formatNumber(fx) << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(fy) + 4 << "\" text-anchor=\"end\">"
        << formatNumber(fy) << "</text>\n";
  }
  out << "<text x=\"" << kLeft + plotW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
      << escapeXml(labels.xLabel) << "</text>\n";
  out << "<text x=\"16\" y=\"" << kTop + plotH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kTop + plotH / 2 << ")\">" << escapeXml(labels.yLabel) << "</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : curves[i].curve.points) out << sx(p.x) << ',' << sy(p.y) << ' ';
    out << "\"/>\n";
    for (const auto& p : curves[i].curve.points) {
      out << "<line x1=\"" << sx(p.x) << "\" y1=\"" << sy(p.ciLo) << "\" x2=\"" << sx(p.x)
          << "\" y2=\"" << sy(p.ciHi) << "\" stroke=\"" << color << "\" stroke-opacity=\"0.4\"/>\n";
    }
    const double ly = kTop + 14.0 * static_cast<double>(i + 1);
    out << "<line x1=\"" << kW - kRight + 10 << "\" y1=\"" << ly - 4 << "\" x2=\""
        << kW - kRight + 28 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kW - kRight + 32 << "\" y=\"" << ly << "\">"
        << escapeXml(curves[i].name) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace ftcnn
