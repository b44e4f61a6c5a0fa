#include "ftcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "ftcnn/error.hpp"
#include "ftcnn/random.hpp"

namespace ftcnn {

void BoundaryPair::validate(std::size_t height) const {
  if (yLI.size() != yMA.size()) {
    throw EvaluationError("boundary curves have different widths (" + std::to_string(yLI.size()) +
                          " vs " + std::to_string(yMA.size()) + ")");
  }
  const double top = static_cast<double>(height) - 1.0;
  for (const auto* curve : {&yLI, &yMA}) {
    for (double y : *curve) {
      if (!std::isfinite(y) || y < 0.0 || y > top) {
        throw EvaluationError("boundary row " + std::to_string(y) + " outside [0, " +
                              std::to_string(top) + "]");
      }
    }
  }
}

// ---- LabeledPatchSet ----

void LabeledPatchSet::add(Tensor patch, int label, std::string group, std::string unit,
                          std::optional<std::string> lesion) {
  patches.push_back(std::move(patch));
  labels.push_back(label);
  groupId.push_back(std::move(group));
  unitId.push_back(std::move(unit));
  lesionId.push_back(std::move(lesion));
}

void LabeledPatchSet::append(const LabeledPatchSet& other) {
  patches.insert(patches.end(), other.patches.begin(), other.patches.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  groupId.insert(groupId.end(), other.groupId.begin(), other.groupId.end());
  unitId.insert(unitId.end(), other.unitId.begin(), other.unitId.end());
  lesionId.insert(lesionId.end(), other.lesionId.begin(), other.lesionId.end());
}

void LabeledPatchSet::validate() const {
  const std::size_t n = patches.size();
  if (labels.size() != n || groupId.size() != n || unitId.size() != n || lesionId.size() != n) {
    throw SamplingError("patch set columns have different lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (patches[i].shape() != patches[0].shape()) {
      throw SamplingError("patch " + std::to_string(i) + " has shape " +
                          shapeToString(patches[i].shape()) + ", expected " +
                          shapeToString(patches[0].shape()));
    }
    if (labels[i] < 0) throw SamplingError("negative label at patch " + std::to_string(i));
    if (lesionId[i] && labels[i] == 0) {
      throw SamplingError("lesion id on negative patch " + std::to_string(i));
    }
  }
}

LabeledPatchSet LabeledPatchSet::subset(std::span<const std::size_t> indices) const {
  LabeledPatchSet out;
  out.patches.reserve(indices.size());
  for (std::size_t i : indices) {
    out.add(patches.at(i), labels.at(i), groupId.at(i), unitId.at(i), lesionId.at(i));
  }
  return out;
}

Tensor LabeledPatchSet::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw SamplingError("empty batch");
  const Shape& item = patches.at(indices[0]).shape();
  Shape shape{indices.size()};
  shape.insert(shape.end(), item.begin(), item.end());
  std::vector<double> data;
  data.reserve(shapeProduct(shape));
  for (std::size_t i : indices) {
    const auto& p = patches.at(i);
    if (p.shape() != item) throw SamplingError("patches in a batch must share one shape");
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

std::vector<int> LabeledPatchSet::batchLabels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

std::vector<std::size_t> LabeledPatchSet::classHistogram() const {
  std::vector<std::size_t> h;
  for (int l : labels) {
    if (static_cast<std::size_t>(l) >= h.size()) h.resize(static_cast<std::size_t>(l) + 1, 0);
    ++h[static_cast<std::size_t>(l)];
  }
  return h;
}

std::vector<std::string> LabeledPatchSet::units() const {
  std::set<std::string> s(unitId.begin(), unitId.end());
  return {s.begin(), s.end()};
}

// ---- resampling and geometric transforms ----

namespace {

double bilinear(const Tensor& image, std::size_t c, double y, double x) {
  const std::size_t h = image.extent(1), w = image.extent(2);
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = image.at(c, y0, x0) * (1.0 - fx) + image.at(c, y0, x1) * fx;
  const double bottom = image.at(c, y1, x0) * (1.0 - fx) + image.at(c, y1, x1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

double trilinear(const Tensor& v, double z, double y, double x) {
  const std::size_t d = v.extent(0), h = v.extent(1), w = v.extent(2);
  z = std::clamp(z, 0.0, static_cast<double>(d - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto z0 = static_cast<std::size_t>(std::floor(z));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t z1 = std::min(z0 + 1, d - 1), y1 = std::min(y0 + 1, h - 1),
                    x1 = std::min(x0 + 1, w - 1);
  const double fz = z - static_cast<double>(z0), fy = y - static_cast<double>(y0),
               fx = x - static_cast<double>(x0);
  auto plane = [&](std::size_t zz) {
    const double top = v.at(zz, y0, x0) * (1.0 - fx) + v.at(zz, y0, x1) * fx;
    const double bottom = v.at(zz, y1, x0) * (1.0 - fx) + v.at(zz, y1, x1) * fx;
    return top * (1.0 - fy) + bottom * fy;
  };
  return plane(z0) * (1.0 - fz) + plane(z1) * fz;
}

std::size_t mirrorIndex(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

void requireImage(const Tensor& image, const char* what) {
  if (image.rank() != 3) {
    throw AugmentationError(std::string(what) + " expects a (C,H,W) image, got " +
                            shapeToString(image.shape()));
  }
}

}  // namespace

Tensor resampleRegion(const Tensor& image, const BoundingBox& region, std::size_t outH,
                      std::size_t outW) {
  requireImage(image, "resampleRegion");
  if (outH == 0 || outW == 0 || !(region.w > 0.0) || !(region.h > 0.0)) {
    throw AugmentationError("resampling needs a non-empty region and output");
  }
  const std::size_t channels = image.extent(0);
  Tensor out({channels, outH, outW});
  const double sy = region.h / static_cast<double>(outH);
  const double sx = region.w / static_cast<double>(outW);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < outH; ++i) {
      const double y = region.y + (static_cast<double>(i) + 0.5) * sy - 0.5;
      for (std::size_t j = 0; j < outW; ++j) {
        const double x = region.x + (static_cast<double>(j) + 0.5) * sx - 0.5;
        out.at(c, i, j) = bilinear(image, c, y, x);
      }
    }
  }
  return out;
}

Tensor dihedral(const Tensor& patch, int element) {
  requireImage(patch, "dihedral");
  const std::size_t channels = patch.extent(0), s = patch.extent(1);
  if (patch.extent(2) != s) throw AugmentationError("dihedral transforms need square patches");
  if (element < 0 || element >= kDihedralOrder) {
    throw AugmentationError("dihedral element must be in [0, 8)");
  }
  Tensor out(patch.shape());
  const std::size_t m = s - 1;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        std::size_t si = i, sj = j;
        switch (element) {
          case 0: break;
          case 1: si = j; sj = m - i; break;
          case 2: si = m - i; sj = m - j; break;
          case 3: si = m - j; sj = i; break;
          case 4: sj = m - j; break;
          case 5: si = m - i; break;
          case 6: si = j; sj = i; break;
          case 7: si = m - j; sj = m - i; break;
        }
        out.at(c, i, j) = patch.at(c, si, sj);
      }
    }
  }
  return out;
}

int dihedralCompose(int a, int b) {
  static const auto table = [] {
    std::array<std::array<int, kDihedralOrder>, kDihedralOrder> t{};
    Tensor probe({1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) probe[i] = static_cast<double>(i);
    std::array<Tensor, kDihedralOrder> images;
    for (int e = 0; e < kDihedralOrder; ++e) images[static_cast<std::size_t>(e)] = dihedral(probe, e);
    for (int x = 0; x < kDihedralOrder; ++x) {
      for (int y = 0; y < kDihedralOrder; ++y) {
        const Tensor composed = dihedral(images[static_cast<std::size_t>(y)], x);
        for (int e = 0; e < kDihedralOrder; ++e) {
          if (images[static_cast<std::size_t>(e)] == composed) {
            t[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = e;
          }
        }
      }
    }
    return t;
  }();
  if (a < 0 || a >= kDihedralOrder || b < 0 || b >= kDihedralOrder) {
    throw AugmentationError("dihedral element must be in [0, 8)");
  }
  return table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
}

std::vector<Tensor> augmentPolyp(const Tensor& image, const BoundingBox& box, std::size_t outSize,
                                 const PolypAugmentation& aug) {
  requireImage(image, "augmentPolyp");
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw AugmentationError("bounding box must be non-empty");
  const double imgW = static_cast<double>(image.extent(2));
  const double imgH = static_cast<double>(image.extent(1));
  if (box.x >= imgW || box.y >= imgH || box.x + box.w <= 0.0 || box.y + box.h <= 0.0) {
    throw AugmentationError("bounding box lies entirely outside the image");
  }
  const double cx = box.x + box.w / 2.0, cy = box.y + box.h / 2.0;
  std::vector<Tensor> out;
  out.reserve(aug.scales.size() * aug.offsets.size() * aug.offsets.size() * kDihedralOrder);
  for (double s : aug.scales) {
    const double w = box.w * s, h = box.h * s;
    for (double dy : aug.offsets) {
      for (double dx : aug.offsets) {
        const BoundingBox region{cx + dx * w - w / 2.0, cy + dy * h - h / 2.0, w, h};
        const Tensor crop = resampleRegion(image, region, outSize, outSize);
        for (int e = 0; e < kDihedralOrder; ++e) out.push_back(dihedral(crop, e));
      }
    }
  }
  return out;
}

Tensor samplePePlanes(const Tensor& volume, const PeCandidate& candidate, double widthMm,
                      double shiftFraction, double angleDeg, std::size_t outSize,
                      double mmPerVoxel) {
  if (volume.rank() != 3) {
    throw AugmentationError("PE sampling expects a (D,H,W) volume, got " +
                            shapeToString(volume.shape()));
  }
  if (outSize == 0 || !(widthMm > 0.0) || !(mmPerVoxel > 0.0)) {
    throw AugmentationError("PE patch width, size and voxel spacing must be positive");
  }
  using Vec = std::array<double, 3>;
  auto norm = [](const Vec& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); };
  auto cross = [](const Vec& a, const Vec& b) {
    return Vec{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  };
  Vec axis = candidate.vesselAxis;
  const double len = norm(axis);
  if (!(len > 0.0)) throw AugmentationError("vessel axis must be non-zero");
  for (double& v : axis) v /= len;
  // First in-plane direction: the coordinate axis least aligned with the vessel.
  std::size_t least = 0;
  for (std::size_t k = 1; k < 3; ++k) {
    if (std::abs(axis[k]) < std::abs(axis[least])) least = k;
  }
  Vec ref{0.0, 0.0, 0.0};
  ref[least] = 1.0;
  Vec u = cross(axis, ref);
  const double ul = norm(u);
  for (double& v : u) v /= ul;
  const Vec w = cross(axis, u);
  const double theta = angleDeg * std::numbers::pi / 180.0;
  Vec ur{}, wr{};
  for (std::size_t k = 0; k < 3; ++k) {
    ur[k] = std::cos(theta) * u[k] + std::sin(theta) * w[k];
    wr[k] = -std::sin(theta) * u[k] + std::cos(theta) * w[k];
  }
  const double widthVox = widthMm / mmPerVoxel;
  Vec center = candidate.center;
  for (std::size_t k = 0; k < 3; ++k) center[k] += shiftFraction * widthVox * axis[k];

  Tensor out({2, outSize, outSize});
  const double step = widthVox / static_cast<double>(outSize);
  for (std::size_t i = 0; i < outSize; ++i) {
    const double r = (static_cast<double>(i) + 0.5) * step - widthVox / 2.0;
    for (std::size_t j = 0; j < outSize; ++j) {
      const double q = (static_cast<double>(j) + 0.5) * step - widthVox / 2.0;
      Vec cs{}, lg{};
      for (std::size_t k = 0; k < 3; ++k) {
        cs[k] = center[k] + r * ur[k] + q * wr[k];
        lg[k] = center[k] + r * ur[k] + q * axis[k];
      }
      out.at(0, i, j) = trilinear(volume, cs[0], cs[1], cs[2]);
      out.at(1, i, j) = trilinear(volume, lg[0], lg[1], lg[2]);
    }
  }
  return out;
}

Tensor peToThreeChannels(const Tensor& twoChannel) {
  if (twoChannel.rank() != 3 || twoChannel.extent(0) < 2) {
    throw AugmentationError("PE patch needs cross-sectional and longitudinal channels, got " +
                            shapeToString(twoChannel.shape()));
  }
  const std::size_t plane = twoChannel.extent(1) * twoChannel.extent(2);
  Tensor out({3, twoChannel.extent(1), twoChannel.extent(2)});
  auto src = twoChannel.data();
  auto dst = out.data();
  std::copy_n(src.begin(), 2 * plane, dst.begin());
  std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(plane), plane,
              dst.begin() + static_cast<std::ptrdiff_t>(2 * plane));
  return out;
}

std::vector<Tensor> augmentPE(const Tensor& volume, const PeCandidate& candidate,
                              std::size_t outSize, const PeAugmentation& aug) {
  std::vector<Tensor> out;
  out.reserve(aug.widthsMm.size() * aug.shifts.size() * aug.anglesDeg.size());
  for (double width : aug.widthsMm) {
    for (double shift : aug.shifts) {
      for (double angle : aug.anglesDeg) {
        out.push_back(peToThreeChannels(
            samplePePlanes(volume, candidate, width, shift, angle, outSize, aug.mmPerVoxel)));
      }
    }
  }
  return out;
}

std::vector<FrameCrop> augmentFrame(const Tensor& frame, std::size_t n, std::size_t cropH,
                                    std::size_t cropW, std::uint64_t seed) {
  requireImage(frame, "augmentFrame");
  const std::size_t h = frame.extent(1), w = frame.extent(2);
  if (cropH == 0 || cropW == 0 || cropH > h || cropW > w) {
    throw AugmentationError("crop " + std::to_string(cropH) + "x" + std::to_string(cropW) +
                            " does not fit a " + std::to_string(h) + "x" + std::to_string(w) +
                            " frame");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> ys(0, h - cropH), xs(0, w - cropW);
  const std::size_t channels = frame.extent(0);
  std::vector<FrameCrop> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    FrameCrop crop;
    crop.y = ys(rng);
    crop.x = xs(rng);
    crop.patch = Tensor({channels, cropH, cropW});
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < cropH; ++i) {
        for (std::size_t j = 0; j < cropW; ++j) {
          crop.patch.at(c, i, j) = frame.at(c, crop.y + i, crop.x + j);
        }
      }
    }
    out.push_back(std::move(crop));
  }
  return out;
}

Tensor centeredPatch(const Tensor& image, std::ptrdiff_t cy, std::ptrdiff_t cx, std::size_t size) {
  if (image.rank() != 3) {
    throw ExtractionError("patch extraction expects a (C,H,W) image, got " +
                          shapeToString(image.shape()));
  }
  if (size == 0) throw ExtractionError("patch size must be positive");
  const std::size_t channels = image.extent(0), h = image.extent(1), w = image.extent(2);
  const auto half = static_cast<std::ptrdiff_t>(size / 2);
  Tensor out({channels, size, size});
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t sy = mirrorIndex(cy - half + static_cast<std::ptrdiff_t>(i), h);
    for (std::size_t j = 0; j < size; ++j) {
      const std::size_t sx = mirrorIndex(cx - half + static_cast<std::ptrdiff_t>(j), w);
      for (std::size_t c = 0; c < channels; ++c) out.at(c, i, j) = image.at(c, sy, sx);
    }
  }
  return out;
}

Tensor grayToThreeChannels(const Tensor& gray) {
  Tensor g = gray;
  if (g.rank() == 2) g = reshape(g, {1, g.extent(0), g.extent(1)});
  if (g.rank() != 3 || g.extent(0) != 1) {
    throw ExtractionError("expected a grayscale (1,H,W) image, got " + shapeToString(gray.shape()));
  }
  std::vector<double> data;
  data.reserve(3 * g.size());
  for (int c = 0; c < 3; ++c) data.insert(data.end(), g.values().begin(), g.values().end());
  return Tensor({3, g.extent(1), g.extent(2)}, std::move(data));
}

LabeledPatchSet extractCimtPatches(const Tensor& roi, const BoundaryPair& interfaces,
                                   const CimtCounts& counts, std::size_t patchSize,
                                   std::uint64_t seed, const std::string& unitId,
                                   double farDistance) {
  const Tensor rgb = grayToThreeChannels(roi);
  const std::size_t h = rgb.extent(1), w = rgb.extent(2);
  if (interfaces.width() != w || interfaces.yMA.size() != w) {
    throw ExtractionError("interfaces need one row per ROI column (" + std::to_string(w) + ")");
  }
  interfaces.validate(h);

  // Pixels far from both curves, measured to every curve point within reach.
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(farDistance));
  std::vector<std::pair<std::size_t, std::size_t>> far;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(x) - reach);
      const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1,
                                               static_cast<std::ptrdiff_t>(x) + reach);
      for (std::ptrdiff_t c = lo; c <= hi; ++c) {
        const double dx = static_cast<double>(c) - static_cast<double>(x);
        for (const auto* curve : {&interfaces.yLI, &interfaces.yMA}) {
          const double dy = (*curve)[static_cast<std::size_t>(c)] - static_cast<double>(y);
          best = std::min(best, std::hypot(dx, dy));
        }
      }
      if (best >= farDistance) far.emplace_back(y, x);
    }
  }
  if (counts.background > 0 && far.empty()) {
    throw ExtractionError("ROI " + unitId + " has no pixel " + std::to_string(farDistance) +
                          " px away from both interfaces");
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> column(0, w - 1);
  LabeledPatchSet out;
  const std::vector<double>* curves[] = {&interfaces.yLI, &interfaces.yMA};
  for (int label = 1; label <= 2; ++label) {
    const auto& curve = *curves[label - 1];
    for (std::size_t k = 0; k < counts.perInterface; ++k) {
      const std::size_t x = column(rng);
      const auto y = static_cast<std::ptrdiff_t>(std::lround(curve[x]));
      out.add(centeredPatch(rgb, y, static_cast<std::ptrdiff_t>(x), patchSize), label,
              unitId + "/" + std::to_string(label) + "/" + std::to_string(k), unitId);
    }
  }
  if (!far.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, far.size() - 1);
    for (std::size_t k = 0; k < counts.background; ++k) {
      const auto [y, x] = far[pick(rng)];
      out.add(centeredPatch(rgb, static_cast<std::ptrdiff_t>(y), static_cast<std::ptrdiff_t>(x),
                            patchSize),
              0, unitId + "/0/" + std::to_string(k), unitId);
    }
  }
  return out;
}

LabeledPatchSet stratify(const LabeledPatchSet& set, std::size_t targetSize, std::uint64_t seed) {
  set.validate();
  std::map<int, std::vector<std::size_t>> byClass;
  for (std::size_t i = 0; i < set.size(); ++i) byClass[set.labels[i]].push_back(i);
  if (byClass.empty() || targetSize == 0) throw SamplingError("nothing to stratify");
  const std::size_t k = byClass.size();
  if (targetSize % k != 0) {
    throw SamplingError("target size " + std::to_string(targetSize) + " cannot be split evenly over " +
                        std::to_string(k) + " classes");
  }
  const std::size_t quota = targetSize / k;
  std::vector<std::size_t> chosen;
  chosen.reserve(targetSize);
  for (auto& [label, idx] : byClass) {
    if (idx.size() < quota) {
      throw SamplingError("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                          " patches, fewer than the " + std::to_string(quota) + " needed");
    }
    std::mt19937_64 rng(deriveSeed(seed, static_cast<std::uint64_t>(label)));
    std::shuffle(idx.begin(), idx.end(), rng);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota));
  }
  std::sort(chosen.begin(), chosen.end());
  return set.subset(chosen);
}

std::pair<LabeledPatchSet, LabeledPatchSet> splitTrainVal(const LabeledPatchSet& set,
                                                          double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw SplitError("split fraction must be in (0, 1), got " + std::to_string(fraction));
  }
  auto units = set.units();
  if (units.size() < 2) {
    throw SplitError("need at least 2 units to split, got " + std::to_string(units.size()));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(units.begin(), units.end(), rng);
  const auto total = static_cast<double>(units.size());
  const auto nTrain = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * total)),
                                              1, units.size() - 1);
  const std::set<std::string> trainUnits(units.begin(),
                                         units.begin() + static_cast<std::ptrdiff_t>(nTrain));
  std::vector<std::size_t> train, val;
  for (std::size_t i = 0; i < set.size(); ++i) {
    (trainUnits.count(set.unitId[i]) ? train : val).push_back(i);
  }
  return {set.subset(train), set.subset(val)};
}

std::vector<GroupRecord> aggregateGroups(std::span<const double> scores,
                                         const LabeledPatchSet& set) {
  if (scores.size() != set.size()) {
    throw AggregationError("got " + std::to_string(scores.size()) + " scores for " +
                           std::to_string(set.size()) + " patches");
  }
  if (set.empty()) throw AggregationError("no groups to aggregate");
  std::vector<GroupRecord> records;
  std::vector<std::size_t> counts;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto [it, inserted] = index.try_emplace(set.groupId[i], records.size());
    if (inserted) {
      records.push_back({set.groupId[i], set.unitId[i], set.lesionId[i], 0.0, set.labels[i]});
      counts.push_back(0);
    }
    auto& r = records[it->second];
    if (r.label != set.labels[i] || r.unitId != set.unitId[i] || r.lesionId != set.lesionId[i]) {
      throw AggregationError("group " + r.groupId + " mixes labels, units or lesions");
    }
    r.meanScore += scores[i];
    ++counts[it->second];
  }
  for (std::size_t g = 0; g < records.size(); ++g) {
    records[g].meanScore /= static_cast<double>(counts[g]);
  }
  return records;
}

// ---- persistence ----

namespace {

void requirePlainField(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) {
    throw IoError("manifest field '" + s + "' contains a comma, quote or newline");
  }
}

std::vector<std::string> splitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void savePatchSet(const LabeledPatchSet& set, const std::filesystem::path& dir) {
  set.validate();
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
  manifest << "patchFile,label,groupId,unitId,lesionId\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    requirePlainField(set.groupId[i]);
    requirePlainField(set.unitId[i]);
    if (set.lesionId[i]) requirePlainField(*set.lesionId[i]);
    char name[32];
    std::snprintf(name, sizeof name, "patch_%07zu.tns", i);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    writeBinary(out, set.patches[i]);
    manifest << name << ',' << set.labels[i] << ',' << set.groupId[i] << ',' << set.unitId[i]
             << ',' << set.lesionId[i].value_or("") << '\n';
  }
}

LabeledPatchSet loadPatchSet(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("cannot open " + (dir / "manifest.csv").string());
  std::string line;
  std::getline(manifest, line);
  if (line != "patchFile,label,groupId,unitId,lesionId") {
    throw IoError("unexpected manifest header in " + dir.string());
  }
  LabeledPatchSet set;
  std::size_t lineNo = 1;
  while (std::getline(manifest, line)) {
    ++lineNo;
    if (line.empty()) continue;
    auto cells = splitCsvLine(line);
    if (cells.size() != 5) {
      throw IoError("manifest line " + std::to_string(lineNo) + " has " +
                    std::to_string(cells.size()) + " fields");
    }
    std::ifstream in(dir / cells[0], std::ios::binary);
    if (!in) throw IoError("cannot open patch file " + (dir / cells[0]).string());
    int label = 0;
    try {
      label = std::stoi(cells[1]);
    } catch (const std::exception&) {
      throw IoError("bad label '" + cells[1] + "' on manifest line " + std::to_string(lineNo));
    }
    std::optional<std::string> lesion;
    if (!cells[4].empty()) lesion = cells[4];
    set.add(readBinary(in), label, cells[2], cells[3], lesion);
  }
  set.validate();
  return set;
}

namespace {

std::string nextToken(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

Tensor readPnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const std::string magic = nextToken(in);
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw IoError(path.string() + " is not a binary PGM/PPM file");
  }
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(nextToken(in));
    h = std::stoul(nextToken(in));
    maxval = std::stoul(nextToken(in));
  } catch (const std::exception&) {
    throw IoError("malformed header in " + path.string());
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw IoError(path.string() + ": only 8-bit images with non-zero extents are supported");
  }
  std::vector<unsigned char> raw(w * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw IoError(path.string() + " is truncated");
  }
  Tensor out({channels, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        out.at(c, y, x) =
            static_cast<double>(raw[(y * w + x) * channels + c]) / static_cast<double>(maxval);
      }
    }
  }
  return out;
}

void writePnm(const std::filesystem::path& path, const Tensor& image) {
  Tensor img = image;
  if (img.rank() == 2) img = reshape(img, {1, img.extent(0), img.extent(1)});
  if (img.rank() != 3 || (img.extent(0) != 1 && img.extent(0) != 3)) {
    throw IoError("can only write (1,H,W) or (3,H,W) images, got " + shapeToString(image.shape()));
  }
  const std::size_t channels = img.extent(0), h = img.extent(1), w = img.extent(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (channels == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> raw(w * h * channels);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        raw[(y * w + x) * channels + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace ftcnn
