#pragma once

#include <functional>
#include <string>

namespace xote {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Installs a process-wide sink and returns the previous one. The default sink
// writes warnings to stderr and drops info messages.
LogSink set_log_sink(LogSink sink);

void log_info(const std::string& msg);
void log_warning(const std::string& msg);

}  // namespace xote
