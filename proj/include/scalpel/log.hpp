#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace scalpel {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the process-wide sink (stderr by default); returns the old one.
LogSink set_log_sink(LogSink sink);

void log_info(std::string_view message);
void log_warning(std::string_view message);

}  // namespace scalpel
