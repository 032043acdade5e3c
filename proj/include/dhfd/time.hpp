#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace dhfd {

// Timezone-naive instant with one-second resolution. The grid origin is the
// Unix epoch; every valid sample lies on a multiple of kSampleInterval.
using Timestamp = std::chrono::sys_seconds;
using Duration = std::chrono::seconds;

inline constexpr Duration kSampleInterval = std::chrono::minutes(10);
inline constexpr double kSamplesPerHour = 6.0;

// Accepts `YYYY-MM-DDTHH:MM:SS` (a space separator is also accepted).
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

inline bool on_grid(Timestamp t) {
  return t.time_since_epoch().count() % kSampleInterval.count() == 0;
}

// Rounds to the nearest grid point, ties toward the later point.
Timestamp snap_to_grid(Timestamp t);

inline double to_hours(Duration d) { return static_cast<double>(d.count()) / 3600.0; }
inline double to_days(Duration d) { return static_cast<double>(d.count()) / 86400.0; }

inline Duration from_hours(double h) { return Duration(std::llround(h * 3600.0)); }

}  // namespace dhfd
