#include "ftcnn/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "ftcnn/error.hpp"

namespace ftcnn {

namespace {

void validateShape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must be non-empty");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extent must be >= 1, got " + shapeToString(shape));
  }
}

static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

template <typename T>
void writeRaw(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T readRaw(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("truncated tensor stream");
  return value;
}

constexpr char kMagic[4] = {'F', 'T', 'N', 'S'};

}  // namespace

std::size_t shapeProduct(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shapeToString(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "<empty>" : s;
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validateShape(shape_);
  data_.assign(shapeProduct(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validateShape(shape_);
  if (data_.size() != shapeProduct(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shapeToString(shape_));
  }
}

Tensor Tensor::fromList(Shape shape, std::initializer_list<double> values) {
  return Tensor(std::move(shape), std::vector<double>(values));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::slice(std::size_t index) const {
  if (shape_.size() < 2) throw ShapeError("slice needs rank >= 2");
  if (index >= shape_[0]) throw ShapeError("slice index out of range");
  Shape sub(shape_.begin() + 1, shape_.end());
  const std::size_t n = shapeProduct(sub);
  auto first = data_.begin() + static_cast<std::ptrdiff_t>(index * n);
  return Tensor(std::move(sub), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

Tensor reshape(const Tensor& t, const Shape& newShape) {
  if (newShape.empty() || shapeProduct(newShape) != t.size()) {
    throw ShapeError("cannot reshape " + shapeToString(t.shape()) + " to " +
                     shapeToString(newShape));
  }
  return Tensor(newShape, t.values());
}

Tensor pad2d(const Tensor& t, std::size_t pad) {
  if (t.rank() != 3) throw ShapeError("pad2d expects a (C,H,W) tensor");
  if (pad == 0) return t;
  const std::size_t c = t.extent(0), h = t.extent(1), w = t.extent(2);
  Tensor out({c, h + 2 * pad, w + 2 * pad});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = &t.data()[(k * h + y) * w];
      double* dst = &out.at(k, y + pad, pad);
      std::copy(src, src + w, dst);
    }
  }
  return out;
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("cannot stack an empty sequence");
  const Shape& inner = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> data;
  data.reserve(shapeProduct(shape));
  for (const auto& item : items) {
    if (item.shape() != inner) {
      throw ShapeError("stack: shape " + shapeToString(item.shape()) + " differs from " +
                       shapeToString(inner));
    }
    data.insert(data.end(), item.data().begin(), item.data().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

void writeBinary(std::ostream& out, const Tensor& t) {
  out.write(kMagic, sizeof(kMagic));
  writeRaw<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) writeRaw<std::uint64_t>(out, e);
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw IoError("failed writing tensor");
}

Tensor readBinary(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError("bad tensor magic");
  }
  const auto rank = readRaw<std::uint32_t>(in);
  if (rank == 0 || rank > 16) throw IoError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(readRaw<std::uint64_t>(in));
  validateShape(shape);
  std::vector<double> data(shapeProduct(shape));
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw IoError("truncated tensor data");
  return Tensor(std::move(shape), std::move(data));
}

nlohmann::json toJson(const Tensor& t) {
  return nlohmann::json{{"shape", t.shape()}, {"data", t.values()}};
}

Tensor fromJson(const nlohmann::json& j) {
  try {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed tensor json: ") + e.what());
  }
}

}  // namespace ftcnn
