#include "clipsplat/log.hpp"

#include <spdlog/spdlog.h>

namespace clipsplat::log {

void info(std::string_view message) { spdlog::info("{}", message); }
void warn(std::string_view message) { spdlog::warn("{}", message); }
void set_verbose(bool verbose) { spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info); }

}  // namespace clipsplat::log
