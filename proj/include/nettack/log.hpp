#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace nettack {

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
inline WarningHandler& warning_handler() {
  static WarningHandler h = [](const std::string& msg) { std::cerr << "nettack: warning: " << msg << '\n'; };
  return h;
}
inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Replaces the process-wide warning sink; returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(detail::warning_mutex());
  return std::exchange(detail::warning_handler(), std::move(h));
}

inline void warn(const std::string& msg) {
  std::lock_guard lock(detail::warning_mutex());
  if (detail::warning_handler()) detail::warning_handler()(msg);
}

}  // namespace nettack
