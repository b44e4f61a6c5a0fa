#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ftcnn/boundary.hpp"
#include "ftcnn/tensor.hpp"

namespace ftcnn {

/// Patches with their labels and the identities used for evaluation:
/// `groupId` is the candidate (or frame) a patch was cut from, `unitId` the
/// video/volume/ROI, and `lesionId` the true finding a positive group covers.
struct LabeledPatchSet {
  std::vector<Tensor> patches;
  std::vector<int> labels;
  std::vector<std::string> groupId;
  std::vector<std::string> unitId;
  std::vector<std::optional<std::string>> lesionId;

  std::size_t size() const { return patches.size(); }
  bool empty() const { return patches.empty(); }
  void add(Tensor patch, int label, std::string group, std::string unit,
           std::optional<std::string> lesion = std::nullopt);
  void append(const LabeledPatchSet& other);

  /// Throws SamplingError when columns have different lengths, shapes differ,
  /// or a lesion id sits on a negative patch.
  void validate() const;

  LabeledPatchSet subset(std::span<const std::size_t> indices) const;
  /// (B,C,H,W) batch of the selected patches.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batchLabels(std::span<const std::size_t> indices) const;
  /// Count per class index 0..max label.
  std::vector<std::size_t> classHistogram() const;
  std::vector<std::string> units() const;
};

struct BoundingBox {
  double x = 0.0;  // top-left column
  double y = 0.0;  // top-left row
  double w = 1.0;
  double h = 1.0;
};

/// Bilinear resampling of the region [x, x+w) x [y, y+h) of a (C,H,W) image
/// onto an outH x outW grid. Sample coordinates are clamped to the image.
Tensor resampleRegion(const Tensor& image, const BoundingBox& region, std::size_t outH,
                      std::size_t outW);

/// The 8 symmetries of the square applied to the two trailing axes of a
/// (C,S,S) patch. 0 is the identity, 1..3 rotate by 90/180/270 degrees,
/// 4..7 are the four mirrors. dihedralCompose(a, b) is the index of
/// "apply b, then a".
Tensor dihedral(const Tensor& patch, int element);
int dihedralCompose(int a, int b);
inline constexpr int kDihedralOrder = 8;

struct PolypAugmentation {
  std::vector<double> scales{1.0, 1.2, 1.5};
  std::vector<double> offsets{-0.1, 0.0, 0.1};  // fraction of the scaled box, per axis
};

/// scales x offsets^2 x 8 patches of outSize x outSize. Ordered by scale,
/// then vertical offset, horizontal offset, dihedral element.
std::vector<Tensor> augmentPolyp(const Tensor& image, const BoundingBox& box, std::size_t outSize,
                                 const PolypAugmentation& aug = {});

/// Geometry of one PE candidate inside a (D,H,W) volume with isotropic voxels.
struct PeCandidate {
  std::array<double, 3> center{};      // (z, y, x) in voxels
  std::array<double, 3> vesselAxis{};  // direction in (z, y, x); normalized internally
};

struct PeAugmentation {
  std::vector<double> widthsMm{10.0, 15.0, 20.0};
  std::vector<double> shifts{-0.2, 0.0, 0.2};  // fraction of the width, along the vessel
  std::vector<double> anglesDeg{0.0, 30.0, 60.0, 90.0, 120.0, 150.0};
  double mmPerVoxel = 1.0;
};

/// Two-channel (cross-sectional, longitudinal) view of `volume` around the
/// candidate: channel 0 is the plane orthogonal to the vessel, channel 1 the
/// plane containing it, both rotated by `angleDeg` about the vessel axis.
Tensor samplePePlanes(const Tensor& volume, const PeCandidate& candidate, double widthMm,
                      double shiftFraction, double angleDeg, std::size_t outSize,
                      double mmPerVoxel = 1.0);

/// (2,H,W) -> (3,H,W) with the second channel repeated.
Tensor peToThreeChannels(const Tensor& twoChannel);

/// widths x shifts x angles three-channel patches (54 with the defaults).
std::vector<Tensor> augmentPE(const Tensor& volume, const PeCandidate& candidate,
                              std::size_t outSize, const PeAugmentation& aug = {});

struct FrameCrop {
  std::size_t y = 0;
  std::size_t x = 0;
  Tensor patch;
};

/// `n` crops at uniformly random positions, deterministic for `seed`.
std::vector<FrameCrop> augmentFrame(const Tensor& frame, std::size_t n, std::size_t cropH,
                                    std::size_t cropW, std::uint64_t seed);

/// size x size window of a (C,H,W) image centered on (cy, cx), with
/// mirrored borders (the edge pixel itself is not repeated).
Tensor centeredPatch(const Tensor& image, std::ptrdiff_t cy, std::ptrdiff_t cx, std::size_t size);

/// (1,H,W) or (H,W) -> (3,H,W) with identical channels.
Tensor grayToThreeChannels(const Tensor& gray);

struct CimtCounts {
  std::size_t perInterface = 100;
  std::size_t background = 200;
};

inline constexpr double kDefaultFarDistance = 8.0;

/// Class 1 patches centered on the lumen-intima interface, class 2 on the
/// media-adventitia interface, class 0 at positions at least `farDistance`
/// pixels (Euclidean, to any point of either curve) from both.
LabeledPatchSet extractCimtPatches(const Tensor& roi, const BoundaryPair& interfaces,
                                   const CimtCounts& counts, std::size_t patchSize,
                                   std::uint64_t seed, const std::string& unitId = "roi",
                                   double farDistance = kDefaultFarDistance);

/// Down-samples every class to targetSize / K patches (K = classes present).
/// Throws SamplingError when targetSize is not a multiple of K or some class
/// has fewer than the quota. Output keeps the input order.
LabeledPatchSet stratify(const LabeledPatchSet& set, std::size_t targetSize, std::uint64_t seed);

/// Splits at unit level: round(fraction * units) units train, the rest
/// validate (each side keeps at least one unit).
std::pair<LabeledPatchSet, LabeledPatchSet> splitTrainVal(const LabeledPatchSet& set,
                                                          double fraction, std::uint64_t seed);

struct GroupRecord {
  std::string groupId;
  std::string unitId;
  std::optional<std::string> lesionId;
  double meanScore = 0.0;
  int label = 0;
};

/// Mean positive-class score per group, in order of first appearance.
std::vector<GroupRecord> aggregateGroups(std::span<const double> scores,
                                         const LabeledPatchSet& set);

/// Directory of FTNS tensors plus manifest.csv
/// (patchFile,label,groupId,unitId,lesionId).
void savePatchSet(const LabeledPatchSet& set, const std::filesystem::path& dir);
LabeledPatchSet loadPatchSet(const std::filesystem::path& dir);

/// 8-bit binary PGM (P5) or PPM (P6) to a (C,H,W) tensor in [0,1].
Tensor readPnm(const std::filesystem::path& path);
/// Writes (1,H,W) / (H,W) as PGM and (3,H,W) as PPM, clamping to [0,1].
void writePnm(const std::filesystem::path& path, const Tensor& image);

}  // namespace ftcnn
