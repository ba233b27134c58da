#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace resmatch::nn {

using Shape = std::vector<std::size_t>;
/// SIMD-aligned storage, so vectorised kernels take the same path on every run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major float64 array with an optional gradient buffer of the same size.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  /// Allocates a zero gradient if none is present.
  std::span<double> ensure_grad();
  void zero_grad();
  void drop_grad() { grad_.clear(); }

  /// Same data, new extents; the element count must match.
  void reshape(Shape shape);

 private:
  Shape shape_;
  Buffer data_;
  Buffer grad_;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(Shape shape, double fill = 0.0);
TensorPtr make_tensor(Shape shape, std::vector<double> data);

/// A learned tensor. Copies share the underlying storage.
struct Param {
  std::string name;
  TensorPtr value;
};

}  // namespace resmatch::nn
