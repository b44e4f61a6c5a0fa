#include "ftcnn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "ftcnn/error.hpp"
#include "ftcnn/random.hpp"

namespace ftcnn::synth {

namespace {

constexpr double kPi = std::numbers::pi;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void addNoise(Tensor& t, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return;
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : t.data()) v += n(rng);
}

Tensor replicateChannels(const Tensor& plane, std::size_t channels) {
  std::vector<double> data;
  data.reserve(plane.size() * channels);
  for (std::size_t c = 0; c < channels; ++c) {
    data.insert(data.end(), plane.values().begin(), plane.values().end());
  }
  return Tensor({channels, plane.extent(1), plane.extent(2)}, std::move(data));
}

void requireSize(const PatternOptions& o) {
  if (o.size < 8 || o.channels == 0) {
    throw ConfigError("synthetic patterns need size >= 8 and at least one channel");
  }
}

// Anti-aliased stroke of the given half-thickness between two points.
void drawSegment(Tensor& img, double y0, double x0, double y1, double x1, double halfWidth,
                 double value) {
  const std::size_t s = img.extent(1);
  const double dy = y1 - y0, dx = x1 - x0;
  const double len2 = std::max(dy * dy + dx * dx, 1e-12);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double py = static_cast<double>(i), px = static_cast<double>(j);
      const double t = std::clamp(((py - y0) * dy + (px - x0) * dx) / len2, 0.0, 1.0);
      const double d = std::hypot(py - (y0 + t * dy), px - (x0 + t * dx));
      img.at(0, i, j) += value * sigmoid((halfWidth - d) * 3.0);
    }
  }
}

}  // namespace

LabeledPatchSet orientedPatterns(std::size_t count, std::uint64_t seed,
                                 const PatternOptions& options, std::size_t perUnit) {
  requireSize(options);
  if (perUnit == 0) throw ConfigError("perUnit must be positive");
  const std::size_t s = options.size;
  const double half = static_cast<double>(s) / 2.0;
  LabeledPatchSet out;
  for (std::size_t k = 0; k < count; ++k) {
    std::mt19937_64 rng(deriveSeed(seed, k));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int label = static_cast<int>(k % 4);
    const double theta = (45.0 * label + (u(rng) - 0.5) * 10.0) * kPi / 180.0;
    const double freq = 0.12 + 0.18 * u(rng);
    const double phase = 2.0 * kPi * u(rng);
    const double contrast = 0.5 + 0.5 * u(rng);
    const double cy = half + (u(rng) - 0.5) * half * 0.6;
    const double cx = half + (u(rng) - 0.5) * half * 0.6;
    const double sigma = static_cast<double>(s) * (0.2 + 0.15 * u(rng));
    Tensor plane({1, s, s});
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        const double y = static_cast<double>(i), x = static_cast<double>(j);
        const double along = x * std::cos(theta) + y * std::sin(theta);
        const double envelope =
            std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (2.0 * sigma * sigma));
        plane.at(0, i, j) = contrast * envelope * std::sin(2.0 * kPi * freq * along + phase);
      }
    }
    addNoise(plane, options.noise, rng);
    const std::string id = "src" + std::to_string(k);
    out.add(replicateChannels(plane, options.channels), label, id,
            "u" + std::to_string(k / perUnit));
  }
  return out;
}

LabeledPatchSet shapeCandidates(std::size_t units, std::size_t groupsPerUnit, std::uint64_t seed,
                                const PatternOptions& options) {
  requireSize(options);
  const std::size_t s = options.size;
  const double half = static_cast<double>(s) / 2.0;
  constexpr int kViews[] = {0, 1, 4, 5};
  LabeledPatchSet out;
  for (std::size_t unit = 0; unit < units; ++unit) {
    const std::string unitId = "unit" + std::to_string(unit);
    for (std::size_t g = 0; g < groupsPerUnit; ++g) {
      const std::size_t index = unit * groupsPerUnit + g;
      std::mt19937_64 rng(deriveSeed(seed, index));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const int label = static_cast<int>((index + unit) % 2);
      Tensor plane({1, s, s});
      // Background clutter: faint random strokes.
      for (int k = 0; k < 3; ++k) {
        drawSegment(plane, u(rng) * s, u(rng) * s, u(rng) * s, u(rng) * s, 0.8,
                    0.15 + 0.2 * u(rng));
      }
      const double r = static_cast<double>(s) * (0.12 + 0.1 * u(rng));
      const double cy = half + (u(rng) - 0.5) * 6.0, cx = half + (u(rng) - 0.5) * 6.0;
      const double value = 0.5 + 0.4 * u(rng);
      if (label == 1) {
        for (std::size_t i = 0; i < s; ++i) {
          for (std::size_t j = 0; j < s; ++j) {
            const double d = std::hypot(static_cast<double>(i) - cy, static_cast<double>(j) - cx);
            plane.at(0, i, j) += value * sigmoid((r - d) * 2.0);
          }
        }
      } else if (u(rng) < 0.5) {
        // Outlined square of the same size.
        const double a = r * 0.9;
        const double rot = u(rng) * kPi / 2.0;
        double py[4], px[4];
        for (int c = 0; c < 4; ++c) {
          const double ang = rot + kPi / 4.0 + c * kPi / 2.0;
          py[c] = cy + a * std::sqrt(2.0) * std::sin(ang);
          px[c] = cx + a * std::sqrt(2.0) * std::cos(ang);
        }
        for (int c = 0; c < 4; ++c) {
          drawSegment(plane, py[c], px[c], py[(c + 1) % 4], px[(c + 1) % 4], 1.0, value);
        }
      } else {
        const double ang = u(rng) * kPi;
        const double len = r * 1.4;
        drawSegment(plane, cy - len * std::sin(ang), cx - len * std::cos(ang),
                    cy + len * std::sin(ang), cx + len * std::cos(ang), r * 0.45, value);
      }
      const std::string groupId = unitId + "/c" + std::to_string(g);
      std::optional<std::string> lesion;
      if (label == 1) lesion = groupId;
      const Tensor base = replicateChannels(plane, options.channels);
      for (int view : kViews) {
        Tensor patch = dihedral(base, view);
        addNoise(patch, options.noise, rng);
        out.add(std::move(patch), label, groupId, unitId, lesion);
      }
    }
  }
  return out;
}

CimtRoi cimtRoi(std::uint64_t seed, const CimtOptions& o) {
  if (o.height < 3 * static_cast<std::size_t>(std::ceil(o.offsetPx)) + 16 || o.width < 8) {
    throw ConfigError("CIMT ROI too small for the requested interface offset");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = static_cast<double>(o.height);
  const double amplitude = 2.0 + 2.0 * u(rng);
  const double period = 40.0 + 40.0 * u(rng);
  const double phase = 2.0 * kPi * u(rng);
  const double base = h * (0.35 + 0.1 * u(rng)) - o.offsetPx / 2.0;
  const double lumen = 0.05 + 0.08 * u(rng);
  const double media = 0.4 + 0.1 * u(rng);
  const double adventitia = 0.8 + 0.15 * u(rng);

  CimtRoi roi;
  roi.image = Tensor({1, o.height, o.width});
  roi.truth.yLI.resize(o.width);
  roi.truth.yMA.resize(o.width);
  for (std::size_t c = 0; c < o.width; ++c) {
    const double y = base + amplitude * std::sin(2.0 * kPi * static_cast<double>(c) / period + phase);
    roi.truth.yLI[c] = y;
    roi.truth.yMA[c] = y + o.offsetPx;
  }
  std::normal_distribution<double> speckle(0.0, o.noise);
  for (std::size_t r = 0; r < o.height; ++r) {
    for (std::size_t c = 0; c < o.width; ++c) {
      const double y = static_cast<double>(r);
      const double s1 = sigmoid((y - roi.truth.yLI[c]) / 0.6);
      const double s2 = sigmoid((y - roi.truth.yMA[c]) / 0.6);
      // Adventitia fades slowly with depth.
      const double depth = std::max(0.0, y - roi.truth.yMA[c]);
      const double fade = 1.0 - 0.3 * std::min(1.0, depth / h);
      double v = lumen + (media - lumen) * s1 + (adventitia * fade - media) * s2;
      if (o.noise > 0.0) v += speckle(rng);
      roi.image.at(0, r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return roi;
}

PeScene peScene(std::uint64_t seed, std::size_t size, std::size_t candidates) {
  if (size < 16 || candidates == 0) throw ConfigError("PE scene needs size >= 16 and candidates");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double mid = static_cast<double>(size - 1) / 2.0;
  std::array<double, 3> axis{1.0 + 0.2 * u(rng), 0.3 * u(rng), 0.3 * u(rng)};
  const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  for (double& v : axis) v /= n;
  const double radius = 4.0;
  const double span = static_cast<double>(size) * 0.3;

  PeScene scene;
  std::vector<std::array<double, 3>> clots;
  for (std::size_t k = 0; k < candidates; ++k) {
    const double t = candidates == 1 ? 0.0
                                     : -span + 2.0 * span * static_cast<double>(k) /
                                                   static_cast<double>(candidates - 1);
    PeCandidate cand;
    cand.vesselAxis = axis;
    for (std::size_t d = 0; d < 3; ++d) cand.center[d] = mid + t * axis[d];
    const int label = static_cast<int>(k % 2);
    if (label == 1) clots.push_back(cand.center);
    scene.candidates.push_back(cand);
    scene.labels.push_back(label);
  }
  scene.volume = Tensor({size, size, size});
  std::normal_distribution<double> noise(0.0, 0.03);
  for (std::size_t z = 0; z < size; ++z) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double p[3] = {z - mid, y - mid, x - mid};
        const double along = p[0] * axis[0] + p[1] * axis[1] + p[2] * axis[2];
        double dist2 = 0.0;
        for (std::size_t d = 0; d < 3; ++d) {
          const double perp = p[d] - along * axis[d];
          dist2 += perp * perp;
        }
        double v = 0.2 + 0.6 * sigmoid((radius - std::sqrt(dist2)) * 2.0);
        for (const auto& c : clots) {
          const double dz = static_cast<double>(z) - c[0], dy = static_cast<double>(y) - c[1],
                       dx = static_cast<double>(x) - c[2];
          v -= 0.45 * sigmoid((3.0 - std::sqrt(dz * dz + dy * dy + dx * dx)) * 2.0);
        }
        scene.volume.at(z, y, x) = v + noise(rng);
      }
    }
  }
  return scene;
}

Tensor colonoscopyFrame(std::uint64_t seed, std::size_t height, std::size_t width) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tint[3] = {0.75, 0.45, 0.4};
  Tensor frame({3, height, width});
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 6; ++k) {
    waves.push_back({u(rng) * 0.05, u(rng) * 0.05, u(rng) * 2.0 * kPi, 0.05 + 0.1 * u(rng)});
  }
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double shade = 0.0;
      for (const auto& w : waves) {
        shade += w.amp * std::sin(w.fy * static_cast<double>(y) + w.fx * static_cast<double>(x) +
                                  w.phase);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        frame.at(c, y, x) = std::clamp(tint[c] + shade * (1.0 - 0.2 * static_cast<double>(c)), 0.0, 1.0);
      }
    }
  }
  return frame;
}

}  // namespace ftcnn::synth
