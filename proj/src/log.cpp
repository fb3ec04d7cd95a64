#include "ltre/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

namespace ltre {

void configure_logging_from_env() {
    auto logger = spdlog::get("ltre");
    if (!logger) {
        logger = spdlog::stderr_color_mt("ltre");
    }
    spdlog::set_default_logger(logger);

    const char* env = std::getenv("LTRE_LOG_LEVEL");
    auto level = spdlog::level::warn;
    if (env != nullptr && *env != '\0') {
        level = spdlog::level::from_str(env);
    }
    spdlog::set_level(level);
    spdlog::set_pattern("[%l] %v");
}

} // namespace ltre
