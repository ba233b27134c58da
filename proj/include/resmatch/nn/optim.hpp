#pragma once

#include <vector>

#include "resmatch/nn/tensor.hpp"

namespace resmatch::nn {

/// Classical momentum SGD: v <- momentum * v + g; w <- w - lr * v.
/// Velocity buffers live as long as the optimizer.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Param> params, double momentum);

  /// Throws StateError if any parameter has no gradient.
  void step(double lr);
  /// Resets every parameter gradient to zeros.
  void zero_grad();

  double momentum() const { return momentum_; }
  const std::vector<Param>& params() const { return params_; }

 private:
  std::vector<Param> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
};

}  // namespace resmatch::nn
