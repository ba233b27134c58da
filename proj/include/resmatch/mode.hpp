#pragma once

#include <string>
#include <string_view>

namespace resmatch {

/// fast: four outer blocks, dot-product similarity, no cost aggregation.
/// accurate: five outer blocks, decision network, cross-based aggregation.
enum class Mode { fast, accurate };

std::string_view to_string(Mode mode);
/// Throws ConfigError for anything but "fast" or "accurate".
Mode parse_mode(std::string_view text);

}  // namespace resmatch
