#pragma once

#include <spdlog/spdlog.h>

namespace gramdyn {

/// Shared logger writing to stderr. Level comes from GRAMDYN_LOG
/// (trace|debug|info|warn|error|off), default warn.
spdlog::logger& logger();

}  // namespace gramdyn
