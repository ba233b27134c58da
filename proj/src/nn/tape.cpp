#include "resmatch/nn/tape.hpp"

#include "resmatch/errors.hpp"

namespace resmatch::nn {

void Tape::record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

void Tape::backward(const TensorPtr& loss) {
  if (entries_.empty()) throw StateError("backward called before any forward pass was recorded");
  if (!loss || loss->size() != 1) throw StateError("backward requires a scalar loss");
  loss->ensure_grad()[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

}  // namespace resmatch::nn
