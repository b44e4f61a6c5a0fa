#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "ftcnn/boundary.hpp"
#include "ftcnn/nn.hpp"
#include "ftcnn/tensor.hpp"

namespace ftcnn {

/// Per-pixel probabilities of the lumen-intima (class 1) and
/// media-adventitia (class 2) interfaces, each (H,W).
struct ConfidenceMaps {
  Tensor mapLI;
  Tensor mapMA;
};

struct SnakeParams {
  double tension = 0.2;
  double rigidity = 0.1;
  double externalWeight = 1.0;
  double stepSize = 0.5;
  std::size_t maxIters = 500;
  double tol = 0.01;  // pixels

  /// Throws ConfigError on a negative weight or maxIters == 0.
  void validate() const;
};

/// Classifies the patch centered on every ROI pixel (mirrored borders).
/// `roi` is (1,H,W) grayscale or (3,H,W); the network must take
/// (3,patchSize,patchSize) input and have 3 classes.
ConfidenceMaps inferConfidenceMaps(const NetworkState& net, const ArchitectureSpec& spec,
                                   const Tensor& roi, std::size_t patchSize,
                                   std::size_t batchSize = 512);

/// Row of the maximum per column; ties go to the smallest row.
std::vector<double> thinColumn(const Tensor& map);
BoundaryPair thinColumnwise(const ConfidenceMaps& maps);

/// tension * sum (y[c+1]-y[c])^2 + rigidity * sum (y[c+1]-2y[c]+y[c-1])^2
///   - externalWeight * sum M(c, y[c]),
/// with M linearly interpolated between rows.
double snakeEnergy(const std::vector<double>& y, const Tensor& map, const SnakeParams& params);

struct SnakeResult {
  std::vector<double> y;
  std::size_t iterations = 0;
  double energy = 0.0;
  bool converged = false;
};

/// Gradient descent on snakeEnergy over the vertical coordinates. A step
/// that would raise the energy is halved until it does not; the result is
/// clamped to [0, H-1]. Throws NumericalError if the energy is not finite.
SnakeResult snakeSmooth(const std::vector<double>& boundary, const Tensor& map,
                        const SnakeParams& params = {});

struct Thickness {
  double meanThickness = 0.0;
  std::vector<double> perColumn;
  bool crossed = false;  // some column has the media-adventitia curve above the lumen-intima one
};

Thickness measureThickness(const BoundaryPair& pair, double pxToMm);

/// Mean |dy| per interface: (lumen-intima, media-adventitia).
std::pair<double, double> boundaryError(const BoundaryPair& predicted, const BoundaryPair& truth);

struct Segmentation {
  ConfidenceMaps maps;
  BoundaryPair raw;
  BoundaryPair smoothed;
  Thickness thickness;
};

Segmentation segmentRoi(const NetworkState& net, const ArchitectureSpec& spec, const Tensor& roi,
                        std::size_t patchSize, const SnakeParams& params, double pxToMm);

/// CSV with column,yLI,yMA,thickness (thickness in mm).
void writeBoundaryCsv(const std::filesystem::path& path, const BoundaryPair& pair, double pxToMm);
/// 8-bit PGM of a probability map.
void writeMapPgm(const std::filesystem::path& path, const Tensor& map);
/// Color overlay: green = lumen-intima, red = media-adventitia.
void writeMergedMapPpm(const std::filesystem::path& path, const ConfidenceMaps& maps);

}  // namespace ftcnn
