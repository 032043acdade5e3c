#include "dhfd/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <unordered_set>

#include "csv_util.hpp"
#include "dhfd/errors.hpp"

namespace dhfd {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

Timestamp require_timestamp(std::string_view text, std::string_view column, std::size_t row) {
  auto t = parse_timestamp(text);
  if (!t) throw ParseError("malformed " + std::string(column) + " '" + std::string(text) + "'", row);
  return *t;
}

std::optional<Timestamp> optional_timestamp(std::string_view text, std::string_view column,
                                            std::size_t row) {
  if (text.empty()) return std::nullopt;
  return require_timestamp(text, column, row);
}

void expect_header(std::istream& in, std::initializer_list<std::string_view> expected,
                   std::size_t required) {
  std::string line;
  if (!csv::next_line(in, line)) throw ParseError("missing header");
  auto cells = csv::split(line);
  if (cells.size() < required || cells.size() > expected.size())
    throw SchemaError("unexpected column count in header '" + line + "'");
  std::size_t i = 0;
  for (auto name : expected) {
    if (i >= cells.size()) break;
    if (cells[i] != name)
      throw SchemaError("expected column '" + std::string(name) + "', found '" +
                        std::string(cells[i]) + "'");
    ++i;
  }
}

}  // namespace

TimeSeriesFrame::TimeSeriesFrame(std::string substation_id, std::vector<Timestamp> timestamps,
                                 std::vector<std::string> feature_names,
                                 std::vector<std::vector<double>> columns)
    : substation_id_(std::move(substation_id)),
      timestamps_(std::move(timestamps)),
      feature_names_(std::move(feature_names)),
      columns_(std::move(columns)) {
  if (columns_.size() != feature_names_.size())
    throw ValidationError("feature name count does not match column count");
  std::unordered_set<std::string> seen;
  for (const auto& name : feature_names_) {
    if (!seen.insert(name).second) throw ValidationError("duplicate feature name '" + name + "'");
  }
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j].size() != timestamps_.size())
      throw ValidationError("column '" + feature_names_[j] + "' length differs from index");
  }
  for (std::size_t i = 0; i < timestamps_.size(); ++i) {
    if (!on_grid(timestamps_[i]))
      throw ValidationError("timestamp " + format_timestamp(timestamps_[i]) + " is off-grid", i + 1);
    if (i > 0 && timestamps_[i] <= timestamps_[i - 1])
      throw ValidationError("timestamps not strictly increasing", i + 1);
  }
}

std::optional<std::size_t> TimeSeriesFrame::feature_index(std::string_view name) const {
  auto it = std::find(feature_names_.begin(), feature_names_.end(), name);
  if (it == feature_names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - feature_names_.begin());
}

std::size_t TimeSeriesFrame::lower_bound(Timestamp t) const {
  return static_cast<std::size_t>(std::lower_bound(timestamps_.begin(), timestamps_.end(), t) -
                                  timestamps_.begin());
}

bool operator==(const TimeSeriesFrame& a, const TimeSeriesFrame& b) {
  if (a.substation_id_ != b.substation_id_ || a.timestamps_ != b.timestamps_ ||
      a.feature_names_ != b.feature_names_)
    return false;
  for (std::size_t j = 0; j < a.columns_.size(); ++j) {
    const auto& x = a.columns_[j];
    const auto& y = b.columns_[j];
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (is_missing(x[i]) != is_missing(y[i])) return false;
      if (!is_missing(x[i]) && x[i] != y[i]) return false;
    }
  }
  return true;
}

void validate_event(const EventSpec& e) {
  auto fail = [&](const std::string& why) {
    throw ValidationError("event '" + e.event_id + "': " + why);
  };
  if (e.train_end <= e.train_start) fail("empty training window");
  if (e.train_end > e.test_start) fail("training window overlaps test window");
  if (e.test_end - e.test_start != kTestWindow) fail("test window must span exactly 7 days");
  if (e.train_end - e.train_start < kMinTrainWindow) fail("training window shorter than 14 days");
  if (e.label == EventLabel::anomaly) {
    if (!e.report_time) fail("anomaly event without report_time");
    if (*e.report_time != e.test_end) fail("test window must end at report_time");
  } else if (e.report_time) {
    fail("normal event must not carry a report_time");
  }
}

std::string format_value(double v) {
  if (is_missing(v)) return {};
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string_view to_string(DisturbanceKind kind) {
  return kind == DisturbanceKind::fault ? "fault" : "task";
}

std::string_view to_string(EventLabel label) {
  return label == EventLabel::anomaly ? "anomaly" : "normal";
}

std::optional<EventLabel> parse_event_label(std::string_view text) {
  if (text == "anomaly") return EventLabel::anomaly;
  if (text == "normal") return EventLabel::normal;
  return std::nullopt;
}

// ---------------------------------------------------------------- time series

TimeSeriesFrame read_timeseries(std::istream& in, std::string substation_id,
                                const LoadOptions& options) {
  std::string line;
  if (!csv::next_line(in, line)) throw ParseError("missing header");
  auto header = csv::split(line);
  if (header.empty() || header[0] != "timestamp")
    throw SchemaError("first column must be 'timestamp'");
  std::vector<std::string> names;
  for (std::size_t j = 1; j < header.size(); ++j) names.emplace_back(header[j]);

  std::vector<Timestamp> stamps;
  std::vector<std::vector<double>> columns(names.size());
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    ++row;
    auto cells = csv::split(line);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row);
    Timestamp t = require_timestamp(cells[0], "timestamp", row);
    if (!on_grid(t)) {
      if (!options.snap_to_grid)
        throw ValidationError("off-grid timestamp " + std::string(cells[0]), row);
      t = snap_to_grid(t);
    }
    if (!stamps.empty()) {
      if (t == stamps.back())
        throw ValidationError("duplicate timestamp " + format_timestamp(t), row);
      if (t < stamps.back()) throw ValidationError("non-monotone timestamp index", row);
    }
    stamps.push_back(t);
    for (std::size_t j = 0; j < names.size(); ++j) {
      auto cell = cells[j + 1];
      if (cell.empty()) {
        columns[j].push_back(kMissing);
        continue;
      }
      auto v = csv::parse_double(cell);
      if (!v)
        throw ParseError("non-numeric value '" + std::string(cell) + "' in column '" + names[j] + "'",
                         row);
      columns[j].push_back(*v);
    }
  }
  return TimeSeriesFrame(std::move(substation_id), std::move(stamps), std::move(names),
                         std::move(columns));
}

TimeSeriesFrame load_timeseries(const std::filesystem::path& path, const LoadOptions& options) {
  auto in = open_input(path);
  try {
    return read_timeseries(in, path.stem().string(), options);
  } catch (const ParseError& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.filename().string() + ": " + e.what());
  }
}

void write_timeseries(const TimeSeriesFrame& frame, std::ostream& out) {
  out << "timestamp";
  for (const auto& name : frame.feature_names()) out << ',' << name;
  out << '\n';
  const auto stamps = frame.timestamps();
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    out << format_timestamp(stamps[i]);
    for (std::size_t j = 0; j < frame.cols(); ++j) out << ',' << format_value(frame.value(i, j));
    out << '\n';
  }
}

void write_timeseries(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_timeseries(frame, out);
}

// ---------------------------------------------------------------- disturbances

std::vector<Disturbance> read_disturbances(std::istream& in) {
  expect_header(in, {"substation_id", "timestamp", "kind"}, 3);
  std::vector<Disturbance> rows;
  std::string line;
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    ++row;
    auto cells = csv::split(line);
    if (cells.size() != 3) throw ParseError("expected 3 cells", row);
    Disturbance d;
    d.substation_id = std::string(cells[0]);
    d.timestamp = require_timestamp(cells[1], "timestamp", row);
    if (cells[2] == "fault") {
      d.kind = DisturbanceKind::fault;
    } else if (cells[2] == "task") {
      d.kind = DisturbanceKind::task;
    } else {
      throw ValidationError("unknown disturbance kind '" + std::string(cells[2]) + "'", row);
    }
    rows.push_back(std::move(d));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.substation_id != b.substation_id) return a.substation_id < b.substation_id;
    return a.timestamp < b.timestamp;
  });
  return rows;
}

std::vector<Disturbance> load_disturbances(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_disturbances(in);
}

void write_disturbances(std::span<const Disturbance> rows, std::ostream& out) {
  out << "substation_id,timestamp,kind\n";
  for (const auto& d : rows)
    out << d.substation_id << ',' << format_timestamp(d.timestamp) << ',' << to_string(d.kind)
        << '\n';
}

// ---------------------------------------------------------------- reports

std::vector<IncidentReport> read_reports(std::istream& in) {
  expect_header(in,
                {"substation_id", "report_time", "problem_category", "fault_label",
                 "monitoring_potential", "anomaly_start", "anomaly_end"},
                3);
  std::vector<IncidentReport> rows;
  std::string line;
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    ++row;
    auto cells = csv::split(line);
    if (cells.size() < 3 || cells.size() > 7) throw ParseError("expected 3 to 7 cells", row);
    cells.resize(7);
    IncidentReport r;
    r.substation_id = std::string(cells[0]);
    r.report_time = require_timestamp(cells[1], "report_time", row);
    r.problem_category = std::string(cells[2]);
    if (!cells[3].empty()) r.fault_label = std::string(cells[3]);
    if (!cells[4].empty()) {
      auto v = csv::parse_double(cells[4]);
      if (!v) throw ParseError("malformed monitoring_potential", row);
      if (*v < 1.0 || *v > 5.0) throw ValidationError("monitoring_potential outside [1, 5]", row);
      r.monitoring_potential = *v;
    }
    r.anomaly_start = optional_timestamp(cells[5], "anomaly_start", row);
    r.anomaly_end = optional_timestamp(cells[6], "anomaly_end", row);
    if (r.anomaly_start && r.anomaly_end && !(*r.anomaly_start < *r.anomaly_end))
      throw ValidationError("anomaly_start must precede anomaly_end", row);
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.substation_id != b.substation_id) return a.substation_id < b.substation_id;
    return a.report_time < b.report_time;
  });
  return rows;
}

std::vector<IncidentReport> load_reports(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_reports(in);
}

void write_reports(std::span<const IncidentReport> rows, std::ostream& out) {
  out << "substation_id,report_time,problem_category,fault_label,monitoring_potential,"
         "anomaly_start,anomaly_end\n";
  for (const auto& r : rows) {
    out << r.substation_id << ',' << format_timestamp(r.report_time) << ',' << r.problem_category
        << ',' << r.fault_label.value_or("") << ','
        << (r.monitoring_potential ? format_value(*r.monitoring_potential) : "") << ','
        << (r.anomaly_start ? format_timestamp(*r.anomaly_start) : "") << ','
        << (r.anomaly_end ? format_timestamp(*r.anomaly_end) : "") << '\n';
  }
}

// ---------------------------------------------------------------- manifest

std::vector<EventSpec> read_manifest(std::istream& in) {
  expect_header(in,
                {"event_id", "substation_id", "label", "train_start", "train_end", "test_start",
                 "test_end", "report_time"},
                7);
  std::vector<EventSpec> events;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    ++row;
    auto cells = csv::split(line);
    if (cells.size() < 7 || cells.size() > 8) throw ParseError("expected 8 cells", row);
    cells.resize(8);
    EventSpec e;
    e.event_id = std::string(cells[0]);
    e.substation_id = std::string(cells[1]);
    auto label = parse_event_label(cells[2]);
    if (!label) throw ValidationError("unknown event label '" + std::string(cells[2]) + "'", row);
    e.label = *label;
    e.train_start = require_timestamp(cells[3], "train_start", row);
    e.train_end = require_timestamp(cells[4], "train_end", row);
    e.test_start = require_timestamp(cells[5], "test_start", row);
    e.test_end = require_timestamp(cells[6], "test_end", row);
    e.report_time = optional_timestamp(cells[7], "report_time", row);
    if (!ids.insert(e.event_id).second)
      throw ValidationError("duplicate event_id '" + e.event_id + "'", row);
    try {
      validate_event(e);
    } catch (const ValidationError& err) {
      throw ValidationError(err.what(), row);
    }
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<EventSpec> load_manifest(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_manifest(in);
}

void write_manifest(std::span<const EventSpec> events, std::ostream& out) {
  out << "event_id,substation_id,label,train_start,train_end,test_start,test_end,report_time\n";
  for (const auto& e : events) {
    out << e.event_id << ',' << e.substation_id << ',' << to_string(e.label) << ','
        << format_timestamp(e.train_start) << ',' << format_timestamp(e.train_end) << ','
        << format_timestamp(e.test_start) << ',' << format_timestamp(e.test_end) << ','
        << (e.report_time ? format_timestamp(*e.report_time) : "") << '\n';
  }
}

// ---------------------------------------------------------------- slicing

TimeSeriesFrame slice(const TimeSeriesFrame& frame, Timestamp start, Timestamp end) {
  if (!(start < end)) throw std::invalid_argument("slice: start must precede end");
  const std::size_t lo = frame.lower_bound(start);
  const std::size_t hi = std::max(lo, frame.lower_bound(end));
  auto stamps = frame.timestamps();
  std::vector<Timestamp> ts(stamps.begin() + lo, stamps.begin() + hi);
  std::vector<std::vector<double>> cols;
  cols.reserve(frame.cols());
  for (std::size_t j = 0; j < frame.cols(); ++j) {
    auto c = frame.column(j);
    cols.emplace_back(c.begin() + lo, c.begin() + hi);
  }
  return TimeSeriesFrame(frame.substation_id(), std::move(ts), frame.feature_names(),
                         std::move(cols));
}

CompletenessStat completeness(const TimeSeriesFrame& frame, Timestamp start, Timestamp end,
                              std::span<const std::string> required) {
  if (!(start < end)) throw std::invalid_argument("completeness: span must be nonempty");
  std::vector<std::size_t> cols;
  if (required.empty()) {
    for (std::size_t j = 0; j < frame.cols(); ++j) cols.push_back(j);
  } else {
    for (const auto& name : required) {
      auto j = frame.feature_index(name);
      if (!j) throw SchemaError("unknown feature '" + name + "'");
      cols.push_back(*j);
    }
  }
  CompletenessStat stat;
  stat.substation_id = frame.substation_id();
  stat.expected_samples = static_cast<std::size_t>((end - start) / kSampleInterval);
  const std::size_t lo = frame.lower_bound(start);
  const std::size_t hi = frame.lower_bound(end);
  for (std::size_t i = lo; i < hi; ++i) {
    bool complete = true;
    for (std::size_t k = 0; k < cols.size() && complete; ++k)
      complete = !is_missing(frame.value(i, cols[k]));
    if (complete) ++stat.present_samples;
  }
  if (stat.expected_samples > 0)
    stat.completeness = std::min(1.0, static_cast<double>(stat.present_samples) /
                                          static_cast<double>(stat.expected_samples));
  return stat;
}

}  // namespace dhfd
