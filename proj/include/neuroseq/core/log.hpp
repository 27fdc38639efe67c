#pragma once

#include <spdlog/spdlog.h>

namespace neuroseq {

// Reads NEUROSEQ_LOG (trace|debug|info|warn|error|off) once; default is info.
void init_logging();

}  // namespace neuroseq
