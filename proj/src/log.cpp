#include "scalpel/log.hpp"

#include <iostream>
#include <mutex>

namespace scalpel {

namespace {

std::mutex g_mutex;

void stderr_sink(LogLevel level, std::string_view message) {
  std::cerr << (level == LogLevel::kWarning ? "[warn] " : "[info] ") << message << '\n';
}

LogSink& sink_ref() {
  static LogSink sink = stderr_sink;
  return sink;
}

void emit(LogLevel level, std::string_view message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (sink_ref()) sink_ref()(level, message);
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
  std::lock_guard<std::mutex> lock(g_mutex);
  LogSink old = std::move(sink_ref());
  sink_ref() = std::move(sink);
  return old;
}

void log_info(std::string_view message) { emit(LogLevel::kInfo, message); }
void log_warning(std::string_view message) { emit(LogLevel::kWarning, message); }

}  // namespace scalpel
