#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dhfd/core_data.hpp"

namespace dhfd {

// One generated signal: sinusoidal daily/weekly/seasonal terms, AR(1) noise
// and linear couplings to the deviations of earlier signals from their base.
struct SignalSpec {
  std::string name;
  double base = 0.0;
  double daily_amplitude = 0.0;
  double daily_peak_hour = 12.0;
  double weekly_amplitude = 0.0;
  double seasonal_amplitude = 0.0;
  double noise_sigma = 0.1;
  double ar_coefficient = 0.8;
  std::vector<std::pair<std::string, double>> couplings;
};

enum class FaultType { setpoint_step_drop, intermittent_zero_flow, storage_temp_decay };
std::string_view to_string(FaultType t);
std::optional<FaultType> parse_fault_type(std::string_view text);

// Magnitudes: step drop adds `magnitude` (any sign); intermittent zero flow
// zeroes each sample with probability `magnitude` in [0, 1]; storage decay
// lowers the value linearly by up to `magnitude` >= 0 over the window.
struct FaultInjection {
  FaultType type = FaultType::setpoint_step_drop;
  std::string feature;
  Timestamp start;
  Duration duration{0};
  double magnitude = 0.0;
};

std::vector<SignalSpec> default_signals();

struct SynthConfig {
  std::uint64_t seed = 42;
  std::string substation_id = "S1";
  Timestamp start = Timestamp{std::chrono::sys_days{std::chrono::year{2031} / 1 / 6}};
  int n_days = 60;
  std::vector<SignalSpec> features = default_signals();
  std::vector<FaultInjection> fault_injections;
  Duration report_delay = std::chrono::hours(24);  // fault start -> customer report
  Duration repair_delay = std::chrono::hours(12);  // report -> maintenance task
  int train_days = 21;
  int normal_events = 5;
};

struct GroundTruth {
  FaultType type;
  std::string feature;
  Timestamp start;
  Timestamp end;
};

struct SynthDataset {
  TimeSeriesFrame frame;
  std::vector<Disturbance> disturbances;
  std::vector<IncidentReport> reports;
  std::vector<EventSpec> events;
  std::vector<GroundTruth> ground_truth;
};

// Clean signals only, no injections.
TimeSeriesFrame generate_signals(const SynthConfig& config);

// Applies one injection inside [start, start + duration). `seed` drives the
// intermittent pattern.
TimeSeriesFrame inject(const TimeSeriesFrame& frame, const FaultInjection& injection,
                       std::uint64_t seed = 0);

// Signals, injections and the matching ground-truth manifest: one anomaly
// event per injection (report at start + report_delay, 7-day test window
// ending at the report) and `normal_events` fault-free 7-day windows. All
// events train on the first `train_days` days.
SynthDataset generate(const SynthConfig& config);

// Writes timeseries/<substation>.csv, disturbances.csv, reports.csv,
// manifest.csv and ground_truth.csv under `dir`.
void write_dataset(std::span<const SynthDataset> datasets, const std::filesystem::path& dir);

SynthConfig synth_config_from_json(std::string_view json_text);
std::string synth_config_to_json(const SynthConfig& config);

}  // namespace dhfd
