#include "dhfd/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dhfd/errors.hpp"

namespace dhfd {

std::size_t conditioning_width(Conditioning c) {
  switch (c) {
    case Conditioning::none: return 0;
    case Conditioning::hour_dow: return 4;
    case Conditioning::hour_dow_doy: return 6;
  }
  return 0;
}

std::string_view to_string(Conditioning c) {
  switch (c) {
    case Conditioning::none: return "none";
    case Conditioning::hour_dow: return "hour_dow";
    case Conditioning::hour_dow_doy: return "hour_dow_doy";
  }
  return "none";
}

std::optional<Conditioning> parse_conditioning(std::string_view text) {
  if (text == "none") return Conditioning::none;
  if (text == "hour_dow") return Conditioning::hour_dow;
  if (text == "hour_dow_doy") return Conditioning::hour_dow_doy;
  return std::nullopt;
}

std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::pre_report_window: return "pre_report_window";
    case ExclusionReason::maintenance_settling: return "maintenance_settling";
    case ExclusionReason::annotated_anomaly: return "annotated_anomaly";
  }
  return "";
}

std::string_view to_string(DropReason r) {
  return r == DropReason::constant ? "constant" : "missing";
}

std::size_t TrainingMask::usable_count() const {
  return static_cast<std::size_t>(std::count(usable.begin(), usable.end(), std::uint8_t{1}));
}

std::vector<Exclusion> exclusion_intervals(std::string_view substation_id,
                                           std::span<const Disturbance> disturbances,
                                           std::span<const IncidentReport> reports) {
  std::vector<Timestamp> tasks;
  std::vector<Timestamp> faults;
  for (const auto& d : disturbances) {
    if (d.substation_id != substation_id) continue;
    (d.kind == DisturbanceKind::task ? tasks : faults).push_back(d.timestamp);
  }
  std::sort(tasks.begin(), tasks.end());

  auto resolution_end = [&](Timestamp report) {
    auto it = std::lower_bound(tasks.begin(), tasks.end(), report);
    if (it == tasks.end()) return report + kAssumedRepairDelay;
    return *it + kMaintenanceSettling;
  };

  std::vector<Exclusion> out;
  std::vector<Timestamp> report_times;
  for (const auto& r : reports) {
    if (r.substation_id != substation_id) continue;
    report_times.push_back(r.report_time);
    const Timestamp end = resolution_end(r.report_time);
    if (r.anomaly_start) {
      out.push_back({*r.anomaly_start, std::max(end, r.anomaly_end.value_or(end)),
                     ExclusionReason::annotated_anomaly});
    } else {
      out.push_back({r.report_time - kPreReportWindow, end, ExclusionReason::pre_report_window});
    }
  }
  // Fault disturbances with no detailed report entry get the unannotated rule.
  for (Timestamp f : faults) {
    if (std::find(report_times.begin(), report_times.end(), f) != report_times.end()) continue;
    out.push_back({f - kPreReportWindow, resolution_end(f), ExclusionReason::pre_report_window});
  }
  for (Timestamp t : tasks)
    out.push_back({t, t + kMaintenanceSettling, ExclusionReason::maintenance_settling});
  std::sort(out.begin(), out.end(), [](const Exclusion& a, const Exclusion& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  return out;
}

TrainingMask build_training_mask(const TimeSeriesFrame& frame,
                                 std::span<const Disturbance> disturbances,
                                 std::span<const IncidentReport> reports) {
  TrainingMask mask;
  mask.usable.assign(frame.rows(), 1);
  mask.exclusions = exclusion_intervals(frame.substation_id(), disturbances, reports);
  for (const auto& ex : mask.exclusions) {
    const std::size_t lo = frame.lower_bound(ex.start);
    const std::size_t hi = frame.lower_bound(ex.end);
    for (std::size_t i = lo; i < hi; ++i) mask.usable[i] = 0;
  }
  return mask;
}

PreprocessorState fit_preprocessor(const TimeSeriesFrame& frame, const Mask& mask,
                                   Conditioning conditioning, const FitOptions& options) {
  if (mask.size() != frame.rows()) throw std::invalid_argument("mask length differs from frame");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) rows.push_back(i);
  if (rows.size() < options.min_rows)
    throw UnusableTrainingData("training mask selects " + std::to_string(rows.size()) +
                               " rows, need at least " + std::to_string(options.min_rows));

  PreprocessorState state;
  state.conditioning = conditioning;
  std::vector<DroppedFeature> constants;
  std::vector<DroppedFeature> sparse;
  for (std::size_t j = 0; j < frame.cols(); ++j) {
    const auto col = frame.column(j);
    std::size_t present = 0;
    double first = 0.0;
    bool constant = true;
    double sum = 0.0;
    for (std::size_t i : rows) {
      const double v = col[i];
      if (is_missing(v)) continue;
      if (present == 0) first = v;
      else if (v != first) constant = false;
      sum += v;
      ++present;
    }
    const auto& name = frame.feature_names()[j];
    if (present > 0 && constant) {
      constants.push_back({name, DropReason::constant});
      continue;
    }
    const double missing_fraction =
        1.0 - static_cast<double>(present) / static_cast<double>(rows.size());
    if (present == 0 || missing_fraction > kMaxMissingFraction) {
      sparse.push_back({name, DropReason::missing});
      continue;
    }
    const double mean = sum / static_cast<double>(present);
    double ss = 0.0;
    for (std::size_t i : rows) {
      const double v = col[i];
      if (!is_missing(v)) ss += (v - mean) * (v - mean);
    }
    state.kept_features.push_back(name);
    state.train_means.push_back(mean);
    state.train_stds.push_back(std::max(std::sqrt(ss / static_cast<double>(present)), kStdFloor));
  }
  state.dropped = std::move(constants);
  state.dropped.insert(state.dropped.end(), sparse.begin(), sparse.end());
  if (state.kept_features.empty())
    throw UnusableTrainingData("all features were dropped during preprocessing");
  return state;
}

TransformedFrame transform(const TimeSeriesFrame& frame, const PreprocessorState& state) {
  const auto n = static_cast<Eigen::Index>(frame.rows());
  const auto d = static_cast<Eigen::Index>(state.n_features());
  TransformedFrame out;
  out.values.resize(n, d);
  out.imputed.resize(n, d);
  out.row_all_missing.assign(frame.rows(), 1);
  for (Eigen::Index k = 0; k < d; ++k) {
    auto j = frame.feature_index(state.kept_features[k]);
    if (!j) throw SchemaError("feature '" + state.kept_features[k] + "' missing from frame");
    const auto col = frame.column(*j);
    const double mean = state.train_means[k];
    const double sd = state.train_stds[k];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = col[i];
      if (is_missing(v)) {
        out.values(i, k) = 0.0;
        out.imputed(i, k) = 1;
      } else {
        out.values(i, k) = (v - mean) / sd;
        out.imputed(i, k) = 0;
        out.row_all_missing[i] = 0;
      }
    }
  }
  return out;
}

double destandardize(const PreprocessorState& state, std::size_t feature, double z) {
  return state.train_means.at(feature) + z * state.train_stds.at(feature);
}

Eigen::MatrixXd encode_calendar(std::span<const Timestamp> timestamps, Conditioning conditioning) {
  if (conditioning == Conditioning::none)
    throw std::invalid_argument("encode_calendar requires a conditioning variant");
  using namespace std::chrono;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const auto width = static_cast<Eigen::Index>(conditioning_width(conditioning));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(timestamps.size()), width);
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const auto day = floor<days>(timestamps[i]);
    const double day_frac = static_cast<double>((timestamps[i] - day).count()) / 86400.0;
    const double dow = static_cast<double>(weekday{day}.iso_encoding() - 1);  // Monday = 0
    const auto r = static_cast<Eigen::Index>(i);
    out(r, 0) = std::sin(two_pi * day_frac);
    out(r, 1) = std::cos(two_pi * day_frac);
    const double week_frac = (dow + day_frac) / 7.0;
    out(r, 2) = std::sin(two_pi * week_frac);
    out(r, 3) = std::cos(two_pi * week_frac);
    if (conditioning == Conditioning::hour_dow_doy) {
      const year_month_day ymd{day};
      const auto jan1 = sys_days{ymd.year() / January / 1};
      const double doy = static_cast<double>((day - jan1).count()) + day_frac;
      const double year_frac = doy / 365.25;
      out(r, 4) = std::sin(two_pi * year_frac);
      out(r, 5) = std::cos(two_pi * year_frac);
    }
  }
  return out;
}

Eigen::MatrixXd conditioning_matrix(std::span<const Timestamp> timestamps,
                                    Conditioning conditioning) {
  if (conditioning == Conditioning::none)
    return Eigen::MatrixXd(static_cast<Eigen::Index>(timestamps.size()), 0);
  return encode_calendar(timestamps, conditioning);
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace dhfd
