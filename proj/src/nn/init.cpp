#include "resmatch/nn/init.hpp"

#include <cmath>

namespace resmatch::nn {

Param uniform_param(std::string name, Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  auto t = make_tensor(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t->data()) v = dist(rng);
  return {std::move(name), t};
}

Param constant_param(std::string name, Shape shape, double value) {
  return {std::move(name), make_tensor(std::move(shape), value)};
}

}  // namespace resmatch::nn
