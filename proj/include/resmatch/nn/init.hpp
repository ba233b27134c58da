#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "resmatch/nn/tensor.hpp"

namespace resmatch::nn {

/// Weight tensor drawn uniformly from +-sqrt(1/fan_in).
Param uniform_param(std::string name, Shape shape, std::size_t fan_in, std::mt19937_64& rng);

Param constant_param(std::string name, Shape shape, double value);

}  // namespace resmatch::nn
