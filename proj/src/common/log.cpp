#include "eogstage/common/log.hpp"

#include <cstdlib>
#include <string_view>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace eogstage {

void init_logging_from_env() {
  auto logger = spdlog::get("eogstage");
  if (!logger) logger = spdlog::stderr_color_mt("eogstage");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("EOG_STAGER_LOG");
  std::string_view level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("EOG_STAGER_LOG={} is not one of error|info|debug; using info", level);
  }
}

}  // namespace eogstage
