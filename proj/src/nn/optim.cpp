#include "resmatch/nn/optim.hpp"

#include "resmatch/errors.hpp"

namespace resmatch::nn {

SgdMomentum::SgdMomentum(std::vector<Param> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  if (momentum < 0.0) throw ConfigError("momentum must be non-negative");
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.value->size(), 0.0);
}

void SgdMomentum::step(double lr) {
  for (const auto& p : params_) {
    if (!p.value->has_grad()) throw StateError("parameter '" + p.name + "' has no gradient");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].value->data();
    const auto g = params_[k].value->grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      w[i] -= lr * v[i];
    }
  }
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p.value->zero_grad();
}

}  // namespace resmatch::nn
