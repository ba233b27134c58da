#include "resmatch/cost_volume.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string_view>

#include "resmatch/errors.hpp"

namespace resmatch {
namespace {

constexpr std::string_view kCvolMagic = "RMCVOL01";

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw InputError("cvol: truncated file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

CostVolume flip_horizontal(const CostVolume& volume) {
  CostVolume out(volume.height, volume.width, volume.dmax);
  for (int y = 0; y < volume.height; ++y) {
    for (int x = 0; x < volume.width; ++x) {
      const int sx = volume.width - 1 - x;
      for (int d = 0; d < volume.dmax; ++d) {
        out.costs[out.index(y, x, d)] = volume.costs[volume.index(y, sx, d)];
        out.valid[out.index(y, x, d)] = volume.valid[volume.index(y, sx, d)];
      }
    }
  }
  return out;
}

int argmin_disparity(const CostVolume& volume, int y, int x) {
  int best = -1;
  double best_cost = 0.0;
  const std::size_t base = volume.index(y, x, 0);
  for (int d = 0; d < volume.dmax; ++d) {
    if (!volume.valid[base + d]) continue;
    if (best < 0 || volume.costs[base + d] < best_cost) {
      best = d;
      best_cost = volume.costs[base + d];
    }
  }
  return best < 0 ? 0 : best;
}

void write_cvol(const std::filesystem::path& path, const CostVolume& volume) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write(kCvolMagic.data(), static_cast<std::streamsize>(kCvolMagic.size()));
  put_u32(os, static_cast<std::uint32_t>(volume.height));
  put_u32(os, static_cast<std::uint32_t>(volume.width));
  put_u32(os, static_cast<std::uint32_t>(volume.dmax));
  for (double c : volume.costs) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(c)));
  os.write(reinterpret_cast<const char*>(volume.valid.data()), static_cast<std::streamsize>(volume.valid.size()));
  if (!os) throw InputError("cvol: write failed for " + path.string());
}

CostVolume read_cvol(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open cost volume " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), 8) || std::string_view(magic.data(), 8) != kCvolMagic) {
    throw InputError("cvol: bad magic in " + path.string());
  }
  const int h = static_cast<int>(get_u32(is));
  const int w = static_cast<int>(get_u32(is));
  const int d = static_cast<int>(get_u32(is));
  CostVolume volume(h, w, d);
  for (double& c : volume.costs) c = static_cast<double>(std::bit_cast<float>(get_u32(is)));
  if (!is.read(reinterpret_cast<char*>(volume.valid.data()), static_cast<std::streamsize>(volume.valid.size()))) {
    throw InputError("cvol: truncated validity plane");
  }
  return volume;
}

}  // namespace resmatch
