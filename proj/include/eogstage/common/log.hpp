#pragma once

#include <spdlog/spdlog.h>

namespace eogstage {

// Reads EOG_STAGER_LOG (error|info|debug, default info) and configures the
// default spdlog logger to write to stderr.
void init_logging_from_env();

}  // namespace eogstage
