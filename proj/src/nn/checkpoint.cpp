#include "resmatch/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "resmatch/errors.hpp"

namespace resmatch::nn {
namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 7> kKindNames{{
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::fully_connected, "fully-connected"},
    {LayerKind::relu, "relu"},
    {LayerKind::tanh, "tanh"},
    {LayerKind::log_softmax, "log-softmax"},
    {LayerKind::sigmoid, "sigmoid"},
    {LayerKind::highway_add, "constant-highway-add"},
}};

void write_le_double(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  os.write(bytes.data(), 8);
}

double read_le_double(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), 8)) throw InputError("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[static_cast<std::size_t>(i)];
  return std::bit_cast<double>(bits);
}

std::string next_line(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("checkpoint: unexpected end of file");
  return line;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  throw InputError("unknown layer kind '" + std::string(text) + "'");
}

std::size_t conv_output_extent(std::size_t input, int kernel, int padding) {
  const long out = static_cast<long>(input) + 2L * padding - kernel + 1;
  if (out < 1) throw ConfigError("kernel does not fit within padded input");
  return static_cast<std::size_t>(out);
}

bool Checkpoint::has_param(std::string_view name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::param(std::string_view name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw InputError("checkpoint has no parameter '" + std::string(name) + "'");
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw InputError("checkpoint has no metadata key '" + key + "'");
  return it->second;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os << kCheckpointMagic << '\n';
  os << "model " << ckpt.model << '\n';
  for (const auto& [k, v] : ckpt.meta) os << "meta " << k << ' ' << v << '\n';
  for (const auto& l : ckpt.layers) {
    os << "layer " << to_string(l.kind) << ' ' << (l.name.empty() ? "-" : l.name) << ' ' << l.kernel << ' ' << l.padding << ' ' << l.width
       << '\n';
  }
  for (const auto& [name, t] : ckpt.params) {
    os << "param " << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << '\n';
    for (double v : t.data()) write_le_double(os, v);
    os << '\n';
  }
  os << "end\n";
  if (!os) throw InputError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  if (next_line(is) != kCheckpointMagic) throw InputError("checkpoint: bad header, expected resmatch-ckpt-v1");
  Checkpoint ckpt;
  for (;;) {
    std::istringstream line(next_line(is));
    std::string tag;
    line >> tag;
    if (tag == "end") break;
    if (tag == "model") {
      line >> ckpt.model;
    } else if (tag == "meta") {
      std::string key, value;
      line >> key;
      std::getline(line >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (tag == "layer") {
      std::string kind;
      LayerSpec spec;
      line >> kind >> spec.name >> spec.kernel >> spec.padding >> spec.width;
      if (!line) throw InputError("checkpoint: malformed layer record");
      if (spec.name == "-") spec.name.clear();
      spec.kind = parse_layer_kind(kind);
      ckpt.layers.push_back(spec);
    } else if (tag == "param") {
      std::string name;
      std::size_t rank = 0;
      line >> name >> rank;
      Shape shape(rank);
      for (auto& d : shape) line >> d;
      if (!line) throw InputError("checkpoint: malformed param record");
      std::vector<double> data(shape_size(shape));
      for (auto& v : data) v = read_le_double(is);
      if (is.get() != '\n') throw InputError("checkpoint: payload of '" + name + "' not terminated");
      ckpt.params.emplace_back(name, Tensor(std::move(shape), std::move(data)));
    } else {
      throw InputError("checkpoint: unknown record '" + tag + "'");
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace resmatch::nn
