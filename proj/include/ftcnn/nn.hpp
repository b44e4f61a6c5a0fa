#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ftcnn/tensor.hpp"

namespace ftcnn {

enum class LayerKind { Input, Convolution, MaxPool, FullyConnected, Relu, Softmax };

std::string_view kindName(LayerKind kind);
bool isTrainable(LayerKind kind);

struct Kernel {
  std::size_t h = 1;
  std::size_t w = 1;
  friend bool operator==(const Kernel&, const Kernel&) = default;
};

/// One row of an architecture table. `inShape` is per sample: (C,H,W) for
/// image-like data, (N,1) after a fully-connected layer.
struct LayerRow {
  std::string name;
  LayerKind kind = LayerKind::Input;
  Shape inShape;
  std::optional<Kernel> kernel;
  std::optional<std::size_t> stride;
  std::optional<std::size_t> pad;
  std::optional<std::size_t> outChannels;
  std::optional<Shape> declaredOutput;

  friend bool operator==(const LayerRow&, const LayerRow&) = default;
};

struct ArchitectureSpec {
  std::vector<LayerRow> rows;

  const Shape& inputShape() const;
  std::size_t classCount() const;
  /// Names of convolution and fully-connected rows, in table order.
  std::vector<std::string> trainableLayers() const;
  /// True when the table spells out relu rows; otherwise relu is inserted
  /// after every trainable layer but the last.
  bool hasExplicitActivations() const;
  const LayerRow& row(std::string_view name) const;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Output extents per row. Convolution and pooling use
/// floor((in + 2*pad - kernel) / stride) + 1; fully-connected gives (out, 1).
/// Throws ArchitectureError on a malformed table, an inShape that does not
/// chain from the previous row, or a declared output that disagrees.
std::vector<Shape> inferShapes(const ArchitectureSpec& spec);

/// Parses the '|'-separated table with header
/// `layer | type | input | kernel | stride | pad | output`. Extents are written
/// like `3x227x227`; `N/A` or `-` marks an empty cell. The symbol `C` in the
/// output column stands for `classCount`.
ArchitectureSpec parseArchitectureTable(std::string_view text,
                                        std::optional<std::size_t> classCount = std::nullopt);
ArchitectureSpec loadArchitecture(const std::filesystem::path& path,
                                  std::optional<std::size_t> classCount = std::nullopt);
std::string formatArchitectureTable(const ArchitectureSpec& spec);

/// The 12-row AlexNet table (data, conv1..fc8) with `classCount` outputs.
ArchitectureSpec alexnetSpec(std::size_t classCount);

/// Copy of `spec` whose final fully-connected row has `classCount` outputs.
ArchitectureSpec withClassCount(const ArchitectureSpec& spec, std::size_t classCount);

class ArchitectureBuilder {
 public:
  explicit ArchitectureBuilder(Shape input, std::string name = "data");
  ArchitectureBuilder& conv(std::string name, std::size_t outChannels, Kernel kernel,
                            std::size_t stride = 1, std::size_t pad = 0);
  ArchitectureBuilder& maxPool(std::string name, Kernel kernel, std::size_t stride,
                               std::size_t pad = 0);
  ArchitectureBuilder& fullyConnected(std::string name, std::size_t outChannels);
  ArchitectureBuilder& relu(std::string name);
  ArchitectureBuilder& softmax(std::string name);
  ArchitectureSpec build() const;

 private:
  ArchitectureBuilder& push(LayerRow row);
  ArchitectureSpec spec_;
  Shape current_;
};

struct LayerParams {
  std::string name;
  Tensor weights;  // conv: out x in x kh x kw; fc: out x inDim
  Tensor bias;     // (out)
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Per-trainable-layer tensors in table order. Used both for the network's
/// parameters and for gradients of the same shapes.
struct ParameterSet {
  std::vector<LayerParams> layers;

  std::size_t indexOf(std::string_view name) const;
  const LayerParams& layer(std::string_view name) const;
  LayerParams& layer(std::string_view name);
  std::size_t parameterCount() const;
  ParameterSet zerosLike() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

using NetworkState = ParameterSet;
using Gradients = ParameterSet;

enum class InitMethod { Gaussian, Xavier, Msra };

NetworkState buildNetwork(const ArchitectureSpec& spec, InitMethod init, std::uint64_t seed);

/// Throws InferenceError unless `net` has exactly the parameter shapes `spec` implies.
void checkCompatible(const NetworkState& net, const ArchitectureSpec& spec);

/// One executable step. Relu and softmax steps implied by the table appear
/// here even when the table has no row for them; `row` is then the row they
/// follow.
struct Op {
  LayerKind kind = LayerKind::Input;
  std::size_t row = 0;
  std::optional<std::size_t> param;
  Shape in;
  Shape out;
  Kernel kernel;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

std::vector<Op> compileOps(const ArchitectureSpec& spec);

struct ForwardTrace {
  Tensor input;
  /// Output of every op, batch-leading: (B,C,H,W) or (B,N).
  std::vector<Tensor> activations;
  /// Flat input index of the selected maximum, per pooling op (empty for others).
  std::vector<std::vector<std::size_t>> poolArgmax;
  /// Softmax output (B, classes); each row sums to 1.
  Tensor probs;
};

/// Full forward pass keeping every activation for backward().
ForwardTrace forward(const NetworkState& net, const ArchitectureSpec& spec, const Tensor& batch);

/// Class probabilities only; does not retain intermediate activations.
Tensor predict(const NetworkState& net, const ArchitectureSpec& spec, const Tensor& batch);

/// Mean of -ln p(true class) with p clamped below at 1e-12.
double crossEntropyLoss(const Tensor& probs, std::span<const int> labels);

inline constexpr double kProbabilityFloor = 1e-12;

/// Gradients of the mean cross-entropy with respect to every weight and bias.
/// Layers whose entry in `trainable` is false get zero gradients and, when
/// nothing below them is trainable, backpropagation stops early. An empty
/// mask means every layer.
Gradients backward(const NetworkState& net, const ArchitectureSpec& spec,
                   const ForwardTrace& trace, std::span<const int> labels,
                   const std::vector<bool>& trainable = {});

namespace layers {

Tensor convForward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                   std::size_t pad);
/// Any of dx/dw/db may be null to skip that gradient. dw and db accumulate.
void convBackward(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad,
                  const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db);

struct PoolResult {
  Tensor y;
  std::vector<std::size_t> argmax;
};
PoolResult maxPoolForward(const Tensor& x, Kernel kernel, std::size_t stride, std::size_t pad);
Tensor maxPoolBackward(const Shape& xShape, std::span<const std::size_t> argmax, const Tensor& dy);

/// x is (B, ...) flattened per sample; w is (out, in).
Tensor denseForward(const Tensor& x, const Tensor& w, const Tensor& b);
void denseBackward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                   Tensor* db);

Tensor reluForward(const Tensor& x);
Tensor reluBackward(const Tensor& x, const Tensor& dy);

/// Row-wise softmax of (B, C) logits with per-row max subtraction.
Tensor softmaxForward(const Tensor& logits);
/// Vector-Jacobian product of softmax given its output.
Tensor softmaxBackward(const Tensor& probs, const Tensor& dprobs);

}  // namespace layers

}  // namespace ftcnn
