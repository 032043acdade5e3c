#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dhfd/core_data.hpp"

namespace dhfd {

using Mask = std::vector<std::uint8_t>;

enum class Conditioning { none, hour_dow, hour_dow_doy };

std::size_t conditioning_width(Conditioning c);
std::string_view to_string(Conditioning c);
std::optional<Conditioning> parse_conditioning(std::string_view text);

inline constexpr Duration kPreReportWindow = std::chrono::hours(48);
inline constexpr Duration kMaintenanceSettling = std::chrono::hours(4);
inline constexpr Duration kAssumedRepairDelay = std::chrono::hours(24);

enum class ExclusionReason { pre_report_window, maintenance_settling, annotated_anomaly };
std::string_view to_string(ExclusionReason r);

struct Exclusion {
  Timestamp start;
  Timestamp end;  // exclusive
  ExclusionReason reason;
};

struct TrainingMask {
  Mask usable;  // 1 = usable as normal behaviour, one entry per frame row
  std::vector<Exclusion> exclusions;

  std::size_t size() const { return usable.size(); }
  std::size_t usable_count() const;
};

// Exclusion rules applied to the disturbances and reports of one substation:
//  - annotated report: [anomaly_start, max(anomaly_end, next task + 4 h))
//  - unannotated report or fault disturbance: [report - 48 h, next task + 4 h)
//  - either, with no task logged afterwards: the end becomes report + 24 h
//  - every task: [task, task + 4 h)
std::vector<Exclusion> exclusion_intervals(std::string_view substation_id,
                                           std::span<const Disturbance> disturbances,
                                           std::span<const IncidentReport> reports);

TrainingMask build_training_mask(const TimeSeriesFrame& frame,
                                 std::span<const Disturbance> disturbances,
                                 std::span<const IncidentReport> reports);

enum class DropReason { constant, missing };
std::string_view to_string(DropReason r);

struct DroppedFeature {
  std::string name;
  DropReason reason;
};

inline constexpr double kMaxMissingFraction = 0.8;
inline constexpr double kStdFloor = 1e-12;

struct PreprocessorState {
  std::vector<std::string> kept_features;
  std::vector<double> train_means;
  std::vector<double> train_stds;  // population convention
  Conditioning conditioning = Conditioning::none;
  std::vector<DroppedFeature> dropped;

  std::size_t n_features() const { return kept_features.size(); }
};

struct FitOptions {
  std::size_t min_rows = 14 * 144;
};

// Statistics use only masked rows and ignore missing cells. Constant features
// are dropped first, then features missing in more than 80 % of the rows.
PreprocessorState fit_preprocessor(const TimeSeriesFrame& frame, const Mask& mask,
                                   Conditioning conditioning, const FitOptions& options = {});

struct TransformedFrame {
  Eigen::MatrixXd values;  // rows x kept features, standardized
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> imputed;
  Mask row_all_missing;  // rows carrying no kept measurement at all
};

TransformedFrame transform(const TimeSeriesFrame& frame, const PreprocessorState& state);

double destandardize(const PreprocessorState& state, std::size_t feature, double z);

// Cyclic calendar features: sin/cos of hour-of-day and day-of-week fractions,
// plus day-of-year (over 365.25 days) for hour_dow_doy.
Eigen::MatrixXd encode_calendar(std::span<const Timestamp> timestamps, Conditioning conditioning);

// Calendar matrix for `conditioning`; zero columns for Conditioning::none.
Eigen::MatrixXd conditioning_matrix(std::span<const Timestamp> timestamps,
                                    Conditioning conditioning);

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows);

}  // namespace dhfd
