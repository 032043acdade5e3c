#include "dhfd/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace dhfd {
namespace {

std::mutex g_mutex;

WarningHandler& handler() {
  static WarningHandler h = [](std::string_view msg) { std::clog << "warning: " << msg << '\n'; };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(g_mutex);
  return std::exchange(handler(), std::move(h));
}

void warn(std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (handler()) handler()(message);
}

}  // namespace dhfd
