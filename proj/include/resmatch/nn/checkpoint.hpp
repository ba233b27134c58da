#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "resmatch/nn/tensor.hpp"

namespace resmatch::nn {

enum class LayerKind { conv2d, fully_connected, relu, tanh, log_softmax, sigmoid, highway_add };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

/// Architecture record stored alongside the weights. For conv2d, `width` is the
/// output channel count; for fully_connected it is the output width.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  int kernel = 0;
  int padding = 0;
  int width = 0;
};

/// Output extent of a stride-1 convolution along one axis.
std::size_t conv_output_extent(std::size_t input, int kernel, int padding);

inline constexpr std::string_view kCheckpointMagic = "resmatch-ckpt-v1";

/// Self-describing model container: text header lines, then each parameter as
/// a text descriptor followed by its little-endian float64 payload.
struct Checkpoint {
  std::string model;
  std::map<std::string, std::string> meta;
  std::vector<LayerSpec> layers;
  std::vector<std::pair<std::string, Tensor>> params;

  bool has_param(std::string_view name) const;
  /// Throws InputError when absent.
  const Tensor& param(std::string_view name) const;
  /// Throws InputError when absent.
  const std::string& meta_value(const std::string& key) const;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace resmatch::nn
