#pragma once

#include <cstddef>
#include <vector>

namespace ftcnn {

/// Lumen-intima and media-adventitia rows, one real coordinate per ROI column.
struct BoundaryPair {
  std::vector<double> yLI;
  std::vector<double> yMA;

  std::size_t width() const { return yLI.size(); }

  /// Throws EvaluationError unless both curves have the same length, are
  /// finite, and lie within [0, height - 1].
  void validate(std::size_t height) const;
};

}  // namespace ftcnn
