#include <algorithm>
#include <cmath>

#include "ftcnn/error.hpp"
#include "ftcnn/nn.hpp"
#include "ftcnn/optim.hpp"
#include "ftcnn/random.hpp"

namespace ftcnn {

std::size_t ParameterSet::indexOf(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  throw ConfigError("no trainable layer named '" + std::string(name) + "'");
}

const LayerParams& ParameterSet::layer(std::string_view name) const {
  return layers[indexOf(name)];
}

LayerParams& ParameterSet::layer(std::string_view name) { return layers[indexOf(name)]; }

std::size_t ParameterSet::parameterCount() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

ParameterSet ParameterSet::zerosLike() const {
  ParameterSet z;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({l.name, Tensor(l.weights.shape()), Tensor(l.bias.shape())});
  }
  return z;
}

namespace {

Shape weightShape(const LayerRow& row) {
  if (row.kind == LayerKind::Convolution) {
    return {*row.outChannels, row.inShape[0], row.kernel->h, row.kernel->w};
  }
  return {*row.outChannels, shapeProduct(row.inShape)};
}

}  // namespace

NetworkState buildNetwork(const ArchitectureSpec& spec, InitMethod init, std::uint64_t seed) {
  inferShapes(spec);
  NetworkState net;
  std::uint64_t index = 0;
  for (const auto& row : spec.rows) {
    if (!isTrainable(row.kind)) continue;
    net.layers.push_back({row.name, initWeights(weightShape(row), init, deriveSeed(seed, index)),
                          initBias(*row.outChannels)});
    ++index;
  }
  return net;
}

void checkCompatible(const NetworkState& net, const ArchitectureSpec& spec) {
  std::size_t l = 0;
  for (const auto& row : spec.rows) {
    if (!isTrainable(row.kind)) continue;
    if (l >= net.layers.size()) throw InferenceError("network is missing layer " + row.name);
    const auto& p = net.layers[l];
    if (p.name != row.name || p.weights.shape() != weightShape(row) ||
        p.bias.shape() != Shape{*row.outChannels}) {
      throw InferenceError("network layer " + p.name + " does not match architecture row " +
                           row.name);
    }
    ++l;
  }
  if (l != net.layers.size()) throw InferenceError("network has more layers than its architecture");
}

std::vector<Op> compileOps(const ArchitectureSpec& spec) {
  const auto shapes = inferShapes(spec);
  const bool explicitRelu = spec.hasExplicitActivations();
  std::size_t lastTrainable = 0;
  for (std::size_t i = 0; i < spec.rows.size(); ++i) {
    if (isTrainable(spec.rows[i].kind)) lastTrainable = i;
  }
  std::vector<Op> ops;
  std::size_t param = 0;
  bool seenFullyConnected = false;
  for (std::size_t i = 1; i < spec.rows.size(); ++i) {
    const auto& row = spec.rows[i];
    Op op;
    op.kind = row.kind;
    op.row = i;
    op.in = row.inShape;
    op.out = shapes[i];
    if (row.kernel) op.kernel = *row.kernel;
    op.stride = row.stride.value_or(1);
    op.pad = row.pad.value_or(0);
    if (isTrainable(row.kind)) op.param = param++;
    if (row.kind == LayerKind::FullyConnected) seenFullyConnected = true;
    if ((row.kind == LayerKind::Convolution || row.kind == LayerKind::MaxPool) &&
        seenFullyConnected) {
      throw ArchitectureError("layer " + row.name + " cannot follow a fully-connected layer");
    }
    if (row.kind == LayerKind::Softmax && i + 1 != spec.rows.size()) {
      throw ArchitectureError("softmax must be the final row");
    }
    ops.push_back(op);
    if (!explicitRelu && isTrainable(row.kind) && i != lastTrainable) {
      Op relu;
      relu.kind = LayerKind::Relu;
      relu.row = i;
      relu.in = shapes[i];
      relu.out = shapes[i];
      ops.push_back(relu);
    }
  }
  if (ops.empty() || ops.back().kind != LayerKind::Softmax) {
    Op softmax;
    softmax.kind = LayerKind::Softmax;
    softmax.row = spec.rows.size() - 1;
    softmax.in = shapes.back();
    softmax.out = shapes.back();
    ops.push_back(softmax);
  }
  if (ops.back().in != Shape{spec.classCount(), 1}) {
    throw ArchitectureError("softmax input must be the final fully-connected output");
  }
  return ops;
}

namespace {

void checkBatch(const Tensor& batch, const ArchitectureSpec& spec) {
  const Shape& in = spec.inputShape();
  if (batch.rank() != in.size() + 1 || !std::equal(in.begin(), in.end(), batch.shape().begin() + 1)) {
    throw InferenceError("batch shape " + shapeToString(batch.shape()) +
                         " does not match architecture input " + shapeToString(in));
  }
}

Tensor applyOp(const Op& op, const NetworkState& net, const Tensor& x,
               std::vector<std::size_t>* argmax) {
  switch (op.kind) {
    case LayerKind::Convolution: {
      if (x.rank() != 4) throw InferenceError("convolution needs a 4-D batch");
      const auto& p = net.layers[*op.param];
      return layers::convForward(x, p.weights, p.bias, op.stride, op.pad);
    }
    case LayerKind::MaxPool: {
      auto r = layers::maxPoolForward(x, op.kernel, op.stride, op.pad);
      if (argmax) *argmax = std::move(r.argmax);
      return std::move(r.y);
    }
    case LayerKind::FullyConnected: {
      const auto& p = net.layers[*op.param];
      return layers::denseForward(x, p.weights, p.bias);
    }
    case LayerKind::Relu: return layers::reluForward(x);
    case LayerKind::Softmax: {
      return layers::softmaxForward(reshape(x, {x.extent(0), x.size() / x.extent(0)}));
    }
    case LayerKind::Input: break;
  }
  throw InferenceError("unexpected op kind");
}

}  // namespace

ForwardTrace forward(const NetworkState& net, const ArchitectureSpec& spec, const Tensor& batch) {
  checkBatch(batch, spec);
  checkCompatible(net, spec);
  const auto ops = compileOps(spec);
  ForwardTrace trace;
  trace.input = batch;
  trace.activations.reserve(ops.size());
  trace.poolArgmax.resize(ops.size());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const Tensor& x = i == 0 ? trace.input : trace.activations[i - 1];
    trace.activations.push_back(applyOp(ops[i], net, x, &trace.poolArgmax[i]));
  }
  trace.probs = trace.activations.back();
  return trace;
}

Tensor predict(const NetworkState& net, const ArchitectureSpec& spec, const Tensor& batch) {
  checkBatch(batch, spec);
  checkCompatible(net, spec);
  const auto ops = compileOps(spec);
  Tensor x = batch;
  for (const auto& op : ops) x = applyOp(op, net, x, nullptr);
  return x;
}

double crossEntropyLoss(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2) throw InferenceError("probabilities must be (B, C)");
  const std::size_t batch = probs.extent(0), classes = probs.extent(1);
  if (labels.size() != batch) throw InferenceError("one label per sample required");
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes) {
      throw InferenceError("label " + std::to_string(labels[n]) + " out of range");
    }
    total -= std::log(std::max(probs.at(n, static_cast<std::size_t>(labels[n])), kProbabilityFloor));
  }
  return total / static_cast<double>(batch);
}

Gradients backward(const NetworkState& net, const ArchitectureSpec& spec,
                   const ForwardTrace& trace, std::span<const int> labels,
                   const std::vector<bool>& trainable) {
  checkCompatible(net, spec);
  const auto ops = compileOps(spec);
  if (trace.activations.size() != ops.size() || trace.poolArgmax.size() != ops.size()) {
    throw InferenceError("trace was not produced by this architecture");
  }
  if (!trainable.empty() && trainable.size() != net.layers.size()) {
    throw InferenceError("trainable mask must have one entry per layer");
  }
  auto wants = [&](std::size_t param) { return trainable.empty() || trainable[param]; };

  Gradients grads = net.zerosLike();
  std::size_t lowest = ops.size();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].param && wants(*ops[i].param)) {
      lowest = i;
      break;
    }
  }
  if (lowest == ops.size()) return grads;

  const Tensor& probs = trace.probs;
  const std::size_t batch = probs.extent(0), classes = probs.extent(1);
  if (labels.size() != batch) throw InferenceError("one label per sample required");
  // d(mean cross-entropy)/d(logits) = (p - onehot) / B
  Tensor grad = probs;
  const double scale = 1.0 / static_cast<double>(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes) {
      throw InferenceError("label " + std::to_string(labels[n]) + " out of range");
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const double target = static_cast<std::size_t>(labels[n]) == c ? 1.0 : 0.0;
      grad.at(n, c) = (probs.at(n, c) - target) * scale;
    }
  }

  for (std::size_t i = ops.size() - 1; i-- > lowest;) {
    const Op& op = ops[i];
    const Tensor& x = i == 0 ? trace.input : trace.activations[i - 1];
    const bool needInput = i > lowest;
    switch (op.kind) {
      case LayerKind::Convolution: {
        const auto& p = net.layers[*op.param];
        auto& g = grads.layers[*op.param];
        const bool wantParams = wants(*op.param);
        Tensor dx;
        layers::convBackward(x, p.weights, op.stride, op.pad, grad, needInput ? &dx : nullptr,
                             wantParams ? &g.weights : nullptr, wantParams ? &g.bias : nullptr);
        if (needInput) grad = std::move(dx);
        break;
      }
      case LayerKind::FullyConnected: {
        const auto& p = net.layers[*op.param];
        auto& g = grads.layers[*op.param];
        const bool wantParams = wants(*op.param);
        Tensor dx;
        layers::denseBackward(x, p.weights, grad, needInput ? &dx : nullptr,
                              wantParams ? &g.weights : nullptr, wantParams ? &g.bias : nullptr);
        if (needInput) grad = std::move(dx);
        break;
      }
      case LayerKind::MaxPool:
        grad = layers::maxPoolBackward(x.shape(), trace.poolArgmax[i], grad);
        break;
      case LayerKind::Relu:
        grad = layers::reluBackward(x, reshape(grad, x.shape()));
        break;
      case LayerKind::Softmax:
      case LayerKind::Input:
        throw InferenceError("unexpected op in backward pass");
    }
  }
  return grads;
}

}  // namespace ftcnn
