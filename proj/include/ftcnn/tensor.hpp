#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ftcnn {

using Shape = std::vector<std::size_t>;

std::size_t shapeProduct(const Shape& shape);
std::string shapeToString(const Shape& shape);

/// Dense row-major array of doubles. The shape is never empty and every
/// extent is at least 1; a default-constructed tensor is the scalar-like {1}.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor fromList(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Row-major element access for the common ranks.
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(double value);

  /// Returns sample `index` along the leading axis as a tensor of the
  /// remaining extents (a copy).
  Tensor slice(std::size_t index) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Same flat data under a new shape; throws ShapeError on a product mismatch.
Tensor reshape(const Tensor& t, const Shape& newShape);

/// Zero-pads the two trailing spatial axes of a (C,H,W) tensor.
Tensor pad2d(const Tensor& t, std::size_t pad);

double sum(const Tensor& t);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

// Serialization: binary is "FTNS" magic, u32 rank, u64 extents, f64 data,
// all little-endian. JSON is {"shape": [...], "data": [...]}.
void writeBinary(std::ostream& out, const Tensor& t);
Tensor readBinary(std::istream& in);
nlohmann::json toJson(const Tensor& t);
Tensor fromJson(const nlohmann::json& j);

}  // namespace ftcnn
