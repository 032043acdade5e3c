#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dhfd/time.hpp"

namespace dhfd {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return v != v; }

// Timestamp-indexed multivariate feature matrix on the 10-minute grid.
// Values are stored column-major; kMissing marks an absent measurement.
// Gaps (absent timestamps) are kept as-is.
class TimeSeriesFrame {
 public:
  TimeSeriesFrame() = default;

  // Throws ValidationError if any invariant is violated.
  TimeSeriesFrame(std::string substation_id, std::vector<Timestamp> timestamps,
                  std::vector<std::string> feature_names,
                  std::vector<std::vector<double>> columns);

  const std::string& substation_id() const { return substation_id_; }
  std::span<const Timestamp> timestamps() const { return timestamps_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  std::size_t rows() const { return timestamps_.size(); }
  std::size_t cols() const { return feature_names_.size(); }
  bool empty() const { return timestamps_.empty(); }

  std::span<const double> column(std::size_t j) const { return columns_.at(j); }
  std::span<double> column_mut(std::size_t j) { return columns_.at(j); }
  double value(std::size_t row, std::size_t col) const { return columns_[col][row]; }

  std::optional<std::size_t> feature_index(std::string_view name) const;

  // Index of the first row with timestamp >= t.
  std::size_t lower_bound(Timestamp t) const;

  friend bool operator==(const TimeSeriesFrame& a, const TimeSeriesFrame& b);

 private:
  std::string substation_id_;
  std::vector<Timestamp> timestamps_;
  std::vector<std::string> feature_names_;
  std::vector<std::vector<double>> columns_;
};

enum class DisturbanceKind { fault, task };

struct Disturbance {
  std::string substation_id;
  Timestamp timestamp;
  DisturbanceKind kind;
};

struct IncidentReport {
  std::string substation_id;
  Timestamp report_time;
  std::string problem_category;
  std::optional<std::string> fault_label;
  std::optional<double> monitoring_potential;  // rating in [1, 5]
  std::optional<Timestamp> anomaly_start;
  std::optional<Timestamp> anomaly_end;

  bool high_monitoring_potential() const {
    return monitoring_potential && *monitoring_potential >= 2.5;
  }
};

enum class EventLabel { anomaly, normal };

inline constexpr Duration kTestWindow = std::chrono::days(7);
inline constexpr Duration kMinTrainWindow = std::chrono::days(14);

struct EventSpec {
  std::string event_id;
  std::string substation_id;
  EventLabel label;
  Timestamp train_start;
  Timestamp train_end;
  Timestamp test_start;
  Timestamp test_end;
  std::optional<Timestamp> report_time;
};

// Throws ValidationError naming the event if an invariant fails.
void validate_event(const EventSpec& event);

struct CompletenessStat {
  std::string substation_id;
  std::size_t expected_samples = 0;
  std::size_t present_samples = 0;
  double completeness = 0.0;
};

struct LoadOptions {
  bool snap_to_grid = false;  // otherwise off-grid timestamps are rejected
};

TimeSeriesFrame read_timeseries(std::istream& in, std::string substation_id,
                                const LoadOptions& options = {});
// The substation id is taken from the file stem.
TimeSeriesFrame load_timeseries(const std::filesystem::path& path, const LoadOptions& options = {});
void write_timeseries(const TimeSeriesFrame& frame, std::ostream& out);
void write_timeseries(const TimeSeriesFrame& frame, const std::filesystem::path& path);

std::vector<Disturbance> read_disturbances(std::istream& in);
std::vector<Disturbance> load_disturbances(const std::filesystem::path& path);
void write_disturbances(std::span<const Disturbance> rows, std::ostream& out);

std::vector<IncidentReport> read_reports(std::istream& in);
std::vector<IncidentReport> load_reports(const std::filesystem::path& path);
void write_reports(std::span<const IncidentReport> rows, std::ostream& out);

std::vector<EventSpec> read_manifest(std::istream& in);
std::vector<EventSpec> load_manifest(const std::filesystem::path& path);
void write_manifest(std::span<const EventSpec> events, std::ostream& out);

// Rows with timestamps in the half-open interval [start, end).
TimeSeriesFrame slice(const TimeSeriesFrame& frame, Timestamp start, Timestamp end);

// Fraction of the expected 10-minute samples in [start, end) that are present
// with every required feature non-missing. An empty `required` list means all
// declared features.
CompletenessStat completeness(const TimeSeriesFrame& frame, Timestamp start, Timestamp end,
                              std::span<const std::string> required = {});

std::string_view to_string(DisturbanceKind kind);
std::string_view to_string(EventLabel label);
std::optional<EventLabel> parse_event_label(std::string_view text);

// Shortest round-trip decimal representation; empty for missing values.
std::string format_value(double v);

}  // namespace dhfd
