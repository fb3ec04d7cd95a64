#pragma once

#include <spdlog/spdlog.h>

namespace ltre {

/// Applies LTRE_LOG_LEVEL (trace|debug|info|warn|error|off) to the default
/// logger. Unset means "warn", so library use stays quiet by default.
void configure_logging_from_env();

} // namespace ltre
