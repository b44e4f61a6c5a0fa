#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ftcnn/boundary.hpp"
#include "ftcnn/data.hpp"
#include "ftcnn/tensor.hpp"

/// Seeded generators standing in for clinical data in tests, the CLI and the
/// acceptance suite.
namespace ftcnn::synth {

struct PatternOptions {
  std::size_t size = 32;
  std::size_t channels = 1;
  double noise = 0.25;
};

/// Source task: four classes of oriented stripe patterns (0, 45, 90 and 135
/// degrees) with random frequency, phase, contrast and additive noise. Every
/// patch is its own group; units are blocks of `perUnit` patches.
LabeledPatchSet orientedPatterns(std::size_t count, std::uint64_t seed,
                                 const PatternOptions& options = {}, std::size_t perUnit = 50);

/// Target task: two classes. Positives hold a filled disc, negatives an
/// outlined square or a bar; both sit on a cluttered, noisy background.
/// Each group is one rendered candidate seen through its 4 flips/rotations;
/// a unit holds `groupsPerUnit` candidates and every positive group is its
/// own lesion.
LabeledPatchSet shapeCandidates(std::size_t units, std::size_t groupsPerUnit, std::uint64_t seed,
                                const PatternOptions& options = {});

struct CimtRoi {
  Tensor image;  // (1,H,W) in [0,1]
  BoundaryPair truth;
};

struct CimtOptions {
  std::size_t height = 60;
  std::size_t width = 92;
  double offsetPx = 6.0;  // media-adventitia minus lumen-intima
  double noise = 0.05;
};

/// Grayscale ROI with a sinusoidal lumen-intima interface and a parallel
/// media-adventitia interface `offsetPx` below: dark lumen, mid-gray
/// intima-media band, bright adventitia.
CimtRoi cimtRoi(std::uint64_t seed, const CimtOptions& options = {});

struct PeScene {
  Tensor volume;  // (D,H,W)
  std::vector<PeCandidate> candidates;
  std::vector<int> labels;  // 1 where the candidate sits on a filling defect
};

/// Cubic volume with one bright straight vessel; half of the candidates lie
/// on dark clots inside it.
PeScene peScene(std::uint64_t seed, std::size_t size = 48, std::size_t candidates = 4);

/// 3-channel frame with smooth colored texture.
Tensor colonoscopyFrame(std::uint64_t seed, std::size_t height = 350, std::size_t width = 500);

}  // namespace ftcnn::synth
