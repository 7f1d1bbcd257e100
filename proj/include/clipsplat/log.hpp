#pragma once

#include <string_view>

namespace clipsplat::log {

// Thin wrappers so translation units that see libtorch's bundled fmt never include spdlog.
void info(std::string_view message);
void warn(std::string_view message);
void set_verbose(bool verbose);

}  // namespace clipsplat::log
