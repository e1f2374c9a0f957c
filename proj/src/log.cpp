#include "gramdyn/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

namespace gramdyn {

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto log = std::make_shared<spdlog::logger>(
        "gramdyn", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    log->set_pattern("[%l] %v");
    spdlog::level::level_enum level = spdlog::level::warn;
    if (const char* env = std::getenv("GRAMDYN_LOG")) {
      level = spdlog::level::from_str(env);
    }
    log->set_level(level);
    return log;
  }();
  return *instance;
}

}  // namespace gramdyn
