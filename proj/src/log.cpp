#include "xote/log.hpp"

#include <iostream>
#include <mutex>

namespace xote {
namespace {

std::mutex g_mu;

void default_sink(LogLevel level, const std::string& msg) {
  if (level == LogLevel::kWarning) std::cerr << "warning: " << msg << "\n";
}

LogSink& sink() {
  static LogSink s = default_sink;
  return s;
}

void emit(LogLevel level, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mu);
  if (sink()) sink()(level, msg);
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard<std::mutex> lock(g_mu);
  LogSink old = std::move(sink());
  sink() = std::move(s);
  return old;
}

void log_info(const std::string& msg) { emit(LogLevel::kInfo, msg); }
void log_warning(const std::string& msg) { emit(LogLevel::kWarning, msg); }

}  // namespace xote
