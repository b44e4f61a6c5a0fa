#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ftcnn/nn.hpp"
#include "ftcnn/optim.hpp"

namespace ftcnn {

/// Which layers a run updates. Named "scratch", "FT:only <head>" or
/// "FT:<first>-<head>"; the trainable set is always a contiguous suffix
/// ending at the head for FT plans.
struct FineTunePlan {
  std::string name;
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
  bool scratch = false;

  bool trains(std::string_view layer) const;
  /// One flag per trainable layer of `net`, in order, for backward().
  std::vector<bool> mask(const NetworkState& net) const;
};

/// Copies every layer but the final one from `src` into `dst`. Throws
/// TransferError if the layer lists differ or a non-final shape disagrees.
NetworkState transferWeights(const NetworkState& src, NetworkState dst);

struct HeadReplacement {
  NetworkState net;
  ArchitectureSpec spec;
};

/// Swaps the last fully-connected layer for a freshly initialized one with
/// `classCount` outputs. The new head is drawn exactly as buildNetwork would
/// draw it for the same seed.
HeadReplacement replaceHead(const NetworkState& net, const ArchitectureSpec& spec,
                            std::size_t classCount, InitMethod init, std::uint64_t seed);

/// Accepts the short names above and the long table forms
/// ("Fine-tuned AlexNet:conv3-fc8", "AlexNet scratch").
FineTunePlan makePlan(std::string_view name, const ArchitectureSpec& spec);

/// "FT:only <head>", "FT:<L-1>-<head>", ..., "FT:<first>-<head>", "scratch".
std::vector<std::string> planLadder(const ArchitectureSpec& spec);

inline constexpr double kHeadRateMultiplier = 10.0;

/// Zeroes the rate of every frozen layer. Trainable layers keep their base
/// rate, except that a fine-tuning plan trains the new head at
/// `headRateMultiplier` times its base rate.
LearningSchedule applyPlan(const FineTunePlan& plan, const LearningSchedule& base,
                           double headRateMultiplier = kHeadRateMultiplier);

/// Schedule with the same rate for every trainable layer of `spec`.
LearningSchedule uniformSchedule(const ArchitectureSpec& spec, double alpha, double mu = 0.9,
                                 double gamma = 0.95);

}  // namespace ftcnn
