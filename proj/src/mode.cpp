#include "resmatch/mode.hpp"

#include "resmatch/errors.hpp"

namespace resmatch {

std::string_view to_string(Mode mode) { return mode == Mode::fast ? "fast" : "accurate"; }

Mode parse_mode(std::string_view text) {
  if (text == "fast") return Mode::fast;
  if (text == "accurate") return Mode::accurate;
  throw ConfigError("mode must be 'fast' or 'accurate', got '" + std::string(text) + "'");
}

}  // namespace resmatch
