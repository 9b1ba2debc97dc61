#include "mvts/error.hpp"

#include <atomic>
#include <iostream>

#include "mvts/log.hpp"

namespace mvts {

const char* category_name(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::runtime:
      return "runtime";
    case ErrorCategory::input:
      return "input";
    case ErrorCategory::config:
      return "config";
  }
  return "unknown";
}

namespace {
std::atomic<bool> g_warnings{true};
}

void warn(std::string_view message) {
  if (g_warnings.load(std::memory_order_relaxed)) {
    std::cerr << "warning: " << message << '\n';
  }
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }
bool warnings_enabled() { return g_warnings.load(); }

}  // namespace mvts
