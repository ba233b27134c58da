#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "resmatch/nn/tensor.hpp"

namespace resmatch::nn {

/// Linear record of backward closures, replayed in reverse order.
///
/// Every op takes a `Tape*`; passing nullptr runs the op in inference mode
/// and records nothing. Closures accumulate into input gradients, so a tensor
/// consumed by several ops receives the sum of their contributions.
class Tape {
 public:
  void record(std::function<void()> backward_fn);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape. The tape is consumed.
  /// Throws StateError when nothing was recorded or the loss is not a scalar.
  void backward(const TensorPtr& loss);

  void clear() { entries_.clear(); }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::function<void()>> entries_;
};

}  // namespace resmatch::nn
