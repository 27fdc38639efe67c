#include "neuroseq/core/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <mutex>

namespace neuroseq {

void init_logging()
{
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("neuroseq");
        spdlog::set_default_logger(logger);
        spdlog::set_pattern("[%l] %v");
        spdlog::set_level(spdlog::level::info);
        if (const char* level = std::getenv("NEUROSEQ_LOG"))
            spdlog::set_level(spdlog::level::from_str(level));
    });
}

}  // namespace neuroseq
