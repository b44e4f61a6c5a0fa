#include "ftcnn/segpipe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ftcnn/data.hpp"
#include "ftcnn/error.hpp"
#include "ftcnn/eval.hpp"

namespace ftcnn {

void SnakeParams::validate() const {
  if (tension < 0.0 || rigidity < 0.0 || externalWeight < 0.0 || stepSize <= 0.0 || tol < 0.0) {
    throw ConfigError("snake weights must be non-negative and the step size positive");
  }
  if (maxIters == 0) throw ConfigError("snake maxIters must be at least 1");
}

ConfidenceMaps inferConfidenceMaps(const NetworkState& net, const ArchitectureSpec& spec,
                                   const Tensor& roi, std::size_t patchSize,
                                   std::size_t batchSize) {
  if (spec.classCount() != 3) {
    throw PipelineError("interface segmentation needs a 3-class network, got " +
                        std::to_string(spec.classCount()) + " classes");
  }
  if (spec.inputShape() != Shape{3, patchSize, patchSize}) {
    throw PipelineError("network input " + shapeToString(spec.inputShape()) +
                        " does not match 3x" + std::to_string(patchSize) + "x" +
                        std::to_string(patchSize) + " patches");
  }
  Tensor image = roi;
  if (image.rank() == 2) image = reshape(image, {1, image.extent(0), image.extent(1)});
  if (image.rank() != 3 || (image.extent(0) != 1 && image.extent(0) != 3)) {
    throw PipelineError("ROI must be (1,H,W) or (3,H,W), got " + shapeToString(roi.shape()));
  }
  if (image.extent(0) == 1) image = grayToThreeChannels(image);
  const std::size_t h = image.extent(1), w = image.extent(2);
  if (batchSize == 0) batchSize = 1;

  ConfidenceMaps maps{Tensor({h, w}), Tensor({h, w})};
  const std::size_t total = h * w;
  const std::size_t patchLen = 3 * patchSize * patchSize;
  for (std::size_t start = 0; start < total; start += batchSize) {
    const std::size_t count = std::min(batchSize, total - start);
    std::vector<double> data;
    data.reserve(count * patchLen);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t y = (start + k) / w, x = (start + k) % w;
      const Tensor p = centeredPatch(image, static_cast<std::ptrdiff_t>(y),
                                     static_cast<std::ptrdiff_t>(x), patchSize);
      data.insert(data.end(), p.values().begin(), p.values().end());
    }
    const Tensor probs =
        predict(net, spec, Tensor({count, 3, patchSize, patchSize}, std::move(data)));
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t y = (start + k) / w, x = (start + k) % w;
      maps.mapLI.at(y, x) = probs.at(k, 1);
      maps.mapMA.at(y, x) = probs.at(k, 2);
    }
  }
  return maps;
}

std::vector<double> thinColumn(const Tensor& map) {
  if (map.rank() != 2) throw PipelineError("confidence map must be (H,W)");
  const std::size_t h = map.extent(0), w = map.extent(1);
  std::vector<double> rows(w);
  for (std::size_t c = 0; c < w; ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < h; ++r) {
      if (map.at(r, c) > map.at(best, c)) best = r;
    }
    rows[c] = static_cast<double>(best);
  }
  return rows;
}

BoundaryPair thinColumnwise(const ConfidenceMaps& maps) {
  if (maps.mapLI.shape() != maps.mapMA.shape()) {
    throw PipelineError("confidence maps have different shapes");
  }
  return {thinColumn(maps.mapLI), thinColumn(maps.mapMA)};
}

namespace {

struct MapSample {
  double value;
  double slope;  // d/dy
};

MapSample sampleColumn(const Tensor& map, std::size_t c, double y) {
  const std::size_t h = map.extent(0);
  if (h == 1) return {map.at(0, c), 0.0};
  const double top = static_cast<double>(h - 1);
  y = std::clamp(y, 0.0, top);
  const auto r0 = std::min(static_cast<std::size_t>(std::floor(y)), h - 2);
  const double f = y - static_cast<double>(r0);
  const double a = map.at(r0, c), b = map.at(r0 + 1, c);
  MapSample s{a + f * (b - a), b - a};
  // On a grid row the interpolant has a kink; use the central difference there.
  if (y == std::floor(y)) {
    const auto r = static_cast<std::size_t>(y);
    if (r == 0) {
      s.slope = map.at(1, c) - map.at(0, c);
    } else if (r == h - 1) {
      s.slope = map.at(h - 1, c) - map.at(h - 2, c);
    } else {
      s.slope = (map.at(r + 1, c) - map.at(r - 1, c)) / 2.0;
    }
    s.value = map.at(r, c);
  }
  return s;
}

std::vector<double> energyGradient(const std::vector<double>& y, const Tensor& map,
                                   const SnakeParams& p) {
  const std::size_t w = y.size();
  std::vector<double> g(w, 0.0);
  for (std::size_t c = 0; c + 1 < w; ++c) {
    const double d = 2.0 * p.tension * (y[c + 1] - y[c]);
    g[c] -= d;
    g[c + 1] += d;
  }
  for (std::size_t c = 1; c + 1 < w; ++c) {
    const double d = 2.0 * p.rigidity * (y[c + 1] - 2.0 * y[c] + y[c - 1]);
    g[c - 1] += d;
    g[c] -= 2.0 * d;
    g[c + 1] += d;
  }
  for (std::size_t c = 0; c < w; ++c) g[c] -= p.externalWeight * sampleColumn(map, c, y[c]).slope;
  return g;
}

}  // namespace

double snakeEnergy(const std::vector<double>& y, const Tensor& map, const SnakeParams& p) {
  if (map.rank() != 2 || y.size() != map.extent(1)) {
    throw PipelineError("snake needs one coordinate per map column");
  }
  double e = 0.0;
  for (std::size_t c = 0; c + 1 < y.size(); ++c) {
    const double d = y[c + 1] - y[c];
    e += p.tension * d * d;
  }
  for (std::size_t c = 1; c + 1 < y.size(); ++c) {
    const double d = y[c + 1] - 2.0 * y[c] + y[c - 1];
    e += p.rigidity * d * d;
  }
  for (std::size_t c = 0; c < y.size(); ++c) e -= p.externalWeight * sampleColumn(map, c, y[c]).value;
  return e;
}

SnakeResult snakeSmooth(const std::vector<double>& boundary, const Tensor& map,
                        const SnakeParams& params) {
  params.validate();
  if (map.rank() != 2 || boundary.size() != map.extent(1)) {
    throw PipelineError("snake needs one coordinate per map column (" +
                        std::to_string(boundary.size()) + " given)");
  }
  const double top = static_cast<double>(map.extent(0) - 1);
  auto checked = [](double e) {
    if (!std::isfinite(e)) throw NumericalError("snake energy is not finite");
    return e;
  };
  SnakeResult r;
  r.y = boundary;
  for (double& v : r.y) {
    if (!std::isfinite(v)) throw NumericalError("snake initial boundary is not finite");
    v = std::clamp(v, 0.0, top);
  }
  r.energy = checked(snakeEnergy(r.y, map, params));
  constexpr int kMaxHalvings = 40;
  std::vector<double> next(r.y.size());
  while (r.iterations < params.maxIters) {
    const auto g = energyGradient(r.y, map, params);
    double step = params.stepSize;
    bool accepted = false;
    double moved = 0.0;
    for (int k = 0; k < kMaxHalvings; ++k, step /= 2.0) {
      moved = 0.0;
      for (std::size_t c = 0; c < r.y.size(); ++c) {
        next[c] = std::clamp(r.y[c] - step * g[c], 0.0, top);
        moved = std::max(moved, std::abs(next[c] - r.y[c]));
      }
      const double e = checked(snakeEnergy(next, map, params));
      if (e <= r.energy) {
        r.energy = e;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      r.converged = true;
      break;
    }
    r.y.swap(next);
    ++r.iterations;
    if (moved < params.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

Thickness measureThickness(const BoundaryPair& pair, double pxToMm) {
  if (pair.yLI.size() != pair.yMA.size() || pair.yLI.empty()) {
    throw EvaluationError("thickness needs two non-empty boundaries of equal width");
  }
  Thickness t;
  t.perColumn.resize(pair.width());
  for (std::size_t c = 0; c < pair.width(); ++c) {
    t.perColumn[c] = (pair.yMA[c] - pair.yLI[c]) * pxToMm;
    if (t.perColumn[c] < 0.0) t.crossed = true;
  }
  t.meanThickness = std::accumulate(t.perColumn.begin(), t.perColumn.end(), 0.0) /
                    static_cast<double>(t.perColumn.size());
  return t;
}

std::pair<double, double> boundaryError(const BoundaryPair& predicted, const BoundaryPair& truth) {
  const std::size_t w = truth.yLI.size();
  if (w == 0 || predicted.yLI.size() != w || predicted.yMA.size() != w || truth.yMA.size() != w) {
    throw EvaluationError("boundary widths differ (" + std::to_string(predicted.yLI.size()) +
                          " vs " + std::to_string(w) + ")");
  }
  double li = 0.0, ma = 0.0;
  for (std::size_t c = 0; c < w; ++c) {
    li += std::abs(predicted.yLI[c] - truth.yLI[c]);
    ma += std::abs(predicted.yMA[c] - truth.yMA[c]);
  }
  return {li / static_cast<double>(w), ma / static_cast<double>(w)};
}

Segmentation segmentRoi(const NetworkState& net, const ArchitectureSpec& spec, const Tensor& roi,
                        std::size_t patchSize, const SnakeParams& params, double pxToMm) {
  Segmentation s;
  s.maps = inferConfidenceMaps(net, spec, roi, patchSize);
  s.raw = thinColumnwise(s.maps);
  s.smoothed.yLI = snakeSmooth(s.raw.yLI, s.maps.mapLI, params).y;
  s.smoothed.yMA = snakeSmooth(s.raw.yMA, s.maps.mapMA, params).y;
  s.thickness = measureThickness(s.smoothed, pxToMm);
  return s;
}

void writeBoundaryCsv(const std::filesystem::path& path, const BoundaryPair& pair, double pxToMm) {
  const auto t = measureThickness(pair, pxToMm);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "column,yLI,yMA,thickness\n";
  for (std::size_t c = 0; c < pair.width(); ++c) {
    out << c << ',' << formatNumber(pair.yLI[c]) << ',' << formatNumber(pair.yMA[c]) << ','
        << formatNumber(t.perColumn[c]) << '\n';
  }
}

void writeMapPgm(const std::filesystem::path& path, const Tensor& map) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  writePnm(path, map);
}

void writeMergedMapPpm(const std::filesystem::path& path, const ConfidenceMaps& maps) {
  if (maps.mapLI.rank() != 2 || maps.mapLI.shape() != maps.mapMA.shape()) {
    throw PipelineError("confidence maps must be (H,W) with equal shapes");
  }
  const std::size_t h = maps.mapLI.extent(0), w = maps.mapLI.extent(1);
  Tensor rgb({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      rgb.at(0, y, x) = maps.mapMA.at(y, x);
      rgb.at(1, y, x) = maps.mapLI.at(y, x);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  writePnm(path, rgb);
}

}  // namespace ftcnn
