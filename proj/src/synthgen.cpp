#include "dhfd/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "dhfd/errors.hpp"
#include "json.hpp"

namespace dhfd {

std::string_view to_string(FaultType t) {
  switch (t) {
    case FaultType::setpoint_step_drop: return "setpoint_step_drop";
    case FaultType::intermittent_zero_flow: return "intermittent_zero_flow";
    case FaultType::storage_temp_decay: return "storage_temp_decay";
  }
  return "";
}

std::optional<FaultType> parse_fault_type(std::string_view text) {
  for (auto t : {FaultType::setpoint_step_drop, FaultType::intermittent_zero_flow,
                 FaultType::storage_temp_decay})
    if (text == to_string(t)) return t;
  return std::nullopt;
}

std::vector<SignalSpec> default_signals() {
  std::vector<SignalSpec> s;
  s.push_back({"outdoor_temp", 4.0, 4.0, 15.0, 0.0, -0.5, 1.0, 0.9, {}});
  s.push_back({"hc_supply_setpoint", 55.0, 0.0, 12.0, 0.0, 0.0, 0.4, 0.3,
               {{"outdoor_temp", -1.2}}});
  s.push_back({"hc_supply_temp", 54.0, 0.0, 12.0, 0.0, 0.0, 0.8, 0.5,
               {{"hc_supply_setpoint", 0.95}}});
  s.push_back({"primary_flow", 1.2, 0.25, 7.0, 0.08, 0.0, 0.08, 0.5, {{"outdoor_temp", -0.03}}});
  s.push_back({"primary_return_temp", 40.0, 0.0, 12.0, 0.0, 0.0, 0.6, 0.5,
               {{"primary_flow", 4.0}, {"hc_supply_temp", 0.3}}});
  s.push_back({"dhw_setpoint", 62.0, 3.0, 18.0, 0.0, 0.0, 0.4, 0.3, {}});
  s.push_back({"dhw_storage_temp_upper", 58.0, 1.0, 19.0, 0.0, 0.0, 0.6, 0.5,
               {{"dhw_setpoint", 0.9}}});
  return s;
}

TimeSeriesFrame generate_signals(const SynthConfig& cfg) {
  if (cfg.n_days <= 0) throw ConfigError("n_days must be positive");
  if (cfg.features.empty()) throw ConfigError("no signals configured");
  using namespace std::chrono;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const std::size_t n = static_cast<std::size_t>(cfg.n_days) * 144;
  const std::size_t d = cfg.features.size();

  std::vector<std::string> names;
  for (const auto& f : cfg.features) names.push_back(f.name);
  // Resolve couplings to earlier signals only.
  std::vector<std::vector<std::pair<std::size_t, double>>> links(d);
  for (std::size_t j = 0; j < d; ++j) {
    for (const auto& [src, coef] : cfg.features[j].couplings) {
      auto it = std::find(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(j), src);
      if (it == names.begin() + static_cast<std::ptrdiff_t>(j))
        throw ConfigError("signal '" + names[j] + "' couples to unknown or later signal '" + src +
                          "'");
      links[j].emplace_back(static_cast<std::size_t>(it - names.begin()), coef);
    }
    if (std::abs(cfg.features[j].ar_coefficient) >= 1.0)
      throw ConfigError("ar_coefficient of '" + names[j] + "' must lie in (-1, 1)");
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> ar(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) ar[j] = cfg.features[j].noise_sigma * gauss(rng);

  std::vector<Timestamp> stamps(n);
  std::vector<std::vector<double>> cols(d, std::vector<double>(n));
  const Timestamp t0 = snap_to_grid(cfg.start);
  for (std::size_t i = 0; i < n; ++i) {
    const Timestamp t = t0 + kSampleInterval * static_cast<long>(i);
    stamps[i] = t;
    const auto day = floor<days>(t);
    const double hour = static_cast<double>((t - day).count()) / 3600.0;
    const double dow = static_cast<double>(weekday{day}.iso_encoding() - 1);
    const year_month_day ymd{day};
    const double doy = static_cast<double>((day - sys_days{ymd.year() / January / 1}).count());
    for (std::size_t j = 0; j < d; ++j) {
      const auto& s = cfg.features[j];
      const double phi = s.ar_coefficient;
      ar[j] = phi * ar[j] + s.noise_sigma * std::sqrt(1.0 - phi * phi) * gauss(rng);
      double v = s.base;
      v += s.daily_amplitude * std::cos(two_pi * (hour - s.daily_peak_hour) / 24.0);
      v += s.weekly_amplitude * std::sin(two_pi * (dow + hour / 24.0) / 7.0);
      v += s.seasonal_amplitude * std::cos(two_pi * doy / 365.25);
      for (const auto& [src, coef] : links[j]) v += coef * (cols[src][i] - cfg.features[src].base);
      cols[j][i] = v + ar[j];
    }
  }
  return TimeSeriesFrame(cfg.substation_id, std::move(stamps), std::move(names), std::move(cols));
}

TimeSeriesFrame inject(const TimeSeriesFrame& frame, const FaultInjection& inj,
                       std::uint64_t seed) {
  auto col = frame.feature_index(inj.feature);
  if (!col) throw SchemaError("unknown feature '" + inj.feature + "'");
  if (!std::isfinite(inj.magnitude)) throw ConfigError("injection magnitude must be finite");
  if (inj.type == FaultType::intermittent_zero_flow && (inj.magnitude < 0.0 || inj.magnitude > 1.0))
    throw ConfigError("intermittent_zero_flow magnitude is a probability in [0, 1]");
  if (inj.type == FaultType::storage_temp_decay && inj.magnitude < 0.0)
    throw ConfigError("storage_temp_decay magnitude must be non-negative");
  if (inj.duration < Duration::zero()) throw ConfigError("injection duration must be non-negative");

  TimeSeriesFrame out = frame;
  if (inj.duration == Duration::zero()) return out;
  auto values = out.column_mut(*col);
  const std::size_t lo = frame.lower_bound(inj.start);
  const std::size_t hi = frame.lower_bound(inj.start + inj.duration);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution zero(inj.type == FaultType::intermittent_zero_flow ? inj.magnitude
                                                                                 : 0.0);
  for (std::size_t i = lo; i < hi; ++i) {
    double& v = values[i];
    switch (inj.type) {
      case FaultType::setpoint_step_drop:
        if (!is_missing(v)) v += inj.magnitude;
        break;
      case FaultType::intermittent_zero_flow:
        if (zero(rng)) v = 0.0;
        break;
      case FaultType::storage_temp_decay: {
        const double progress = static_cast<double>((frame.timestamps()[i] - inj.start).count()) /
                                static_cast<double>(inj.duration.count());
        if (!is_missing(v)) v -= inj.magnitude * progress;
        break;
      }
    }
  }
  return out;
}

namespace {

struct Interval {
  Timestamp start, end;
  bool overlaps(const Interval& o) const { return start < o.end && o.start < end; }
};

std::string pad(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", k);
  return buf;
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  using namespace std::chrono;
  if (cfg.train_days * days(1) < kMinTrainWindow) throw ConfigError("train_days must be >= 14");
  if (cfg.normal_events < 0) throw ConfigError("normal_events must be non-negative");
  const Timestamp series_start = snap_to_grid(cfg.start);
  const Timestamp series_end = series_start + days(cfg.n_days);
  const Timestamp train_end = series_start + days(cfg.train_days);

  auto injections = cfg.fault_injections;
  std::stable_sort(injections.begin(), injections.end(),
                   [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t a = 0; a < injections.size(); ++a) {
    const auto& f = injections[a];
    if (f.duration <= Duration::zero()) throw ConfigError("injection durations must be positive");
    if (f.start < series_start || f.start + f.duration > series_end)
      throw ConfigError("injection window lies outside the series");
    for (std::size_t b = 0; b < a; ++b) {
      const auto& g = injections[b];
      if (g.type == f.type && Interval{g.start, g.start + g.duration}.overlaps(
                                  Interval{f.start, f.start + f.duration}))
        throw ConfigError("overlapping " + std::string(to_string(f.type)) + " injections");
    }
  }

  SynthDataset ds;
  TimeSeriesFrame frame = generate_signals(cfg);
  std::vector<Interval> disturbed;
  for (std::size_t k = 0; k < injections.size(); ++k) {
    const auto& f = injections[k];
    frame = inject(frame, f, cfg.seed + 1000003ULL * (k + 1));
    const Timestamp report = f.start + cfg.report_delay;
    const Timestamp task = std::max(report + cfg.repair_delay, f.start + f.duration);
    ds.ground_truth.push_back({f.type, f.feature, f.start, f.start + f.duration});
    ds.disturbances.push_back({cfg.substation_id, report, DisturbanceKind::fault});
    ds.disturbances.push_back({cfg.substation_id, task, DisturbanceKind::task});
    IncidentReport r;
    r.substation_id = cfg.substation_id;
    r.report_time = report;
    r.problem_category = "synthetic";
    r.fault_label = std::string(to_string(f.type));
    r.anomaly_start = f.start;
    r.anomaly_end = task + from_hours(4);
    ds.reports.push_back(r);

    EventSpec e;
    e.event_id = cfg.substation_id + "_anomaly_" + pad(static_cast<int>(k + 1));
    e.substation_id = cfg.substation_id;
    e.label = EventLabel::anomaly;
    e.train_start = series_start;
    e.train_end = train_end;
    e.test_start = report - kTestWindow;
    e.test_end = report;
    e.report_time = report;
    if (e.test_start < train_end)
      throw ConfigError("fault at " + format_timestamp(f.start) +
                        " leaves no room for a test window after the training period");
    if (report > series_end) throw ConfigError("report time falls after the series end");
    ds.events.push_back(e);
    disturbed.push_back({std::min(f.start, report - from_hours(48)), task + from_hours(24)});
  }

  int placed = 0;
  for (Timestamp s = train_end; placed < cfg.normal_events && s + kTestWindow <= series_end;
       s += kTestWindow) {
    const Interval w{s, s + kTestWindow};
    if (std::any_of(disturbed.begin(), disturbed.end(),
                    [&](const Interval& d) { return d.overlaps(w); }))
      continue;
    EventSpec e;
    e.event_id = cfg.substation_id + "_normal_" + pad(++placed);
    e.substation_id = cfg.substation_id;
    e.label = EventLabel::normal;
    e.train_start = series_start;
    e.train_end = train_end;
    e.test_start = w.start;
    e.test_end = w.end;
    ds.events.push_back(e);
  }
  if (placed < cfg.normal_events)
    throw ConfigError("series too short for " + std::to_string(cfg.normal_events) +
                      " fault-free normal events");
  for (const auto& e : ds.events) validate_event(e);
  ds.frame = std::move(frame);
  return ds;
}

void write_dataset(std::span<const SynthDataset> datasets, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "timeseries");
  std::vector<Disturbance> disturbances;
  std::vector<IncidentReport> reports;
  std::vector<EventSpec> events;
  for (const auto& ds : datasets) {
    write_timeseries(ds.frame, dir / "timeseries" / (ds.frame.substation_id() + ".csv"));
    disturbances.insert(disturbances.end(), ds.disturbances.begin(), ds.disturbances.end());
    reports.insert(reports.end(), ds.reports.begin(), ds.reports.end());
    events.insert(events.end(), ds.events.begin(), ds.events.end());
  }
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
  };
  auto d_out = open("disturbances.csv");
  write_disturbances(disturbances, d_out);
  auto r_out = open("reports.csv");
  write_reports(reports, r_out);
  auto m_out = open("manifest.csv");
  write_manifest(events, m_out);
  auto g_out = open("ground_truth.csv");
  g_out << "substation_id,injection_type,feature,start,end\n";
  for (const auto& ds : datasets)
    for (const auto& g : ds.ground_truth)
      g_out << ds.frame.substation_id() << ',' << to_string(g.type) << ',' << g.feature << ','
            << format_timestamp(g.start) << ',' << format_timestamp(g.end) << '\n';
}

// ---------------------------------------------------------------- JSON config

SynthConfig synth_config_from_json(std::string_view text) {
  using json = nlohmann::ordered_json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  SynthConfig c;
  auto ts = [](const json& v, const char* what) {
    auto t = parse_timestamp(v.get<std::string>());
    if (!t) throw ConfigError(std::string("synth config: malformed ") + what);
    return *t;
  };
  try {
    c.seed = j.value("seed", c.seed);
    c.substation_id = j.value("substation_id", c.substation_id);
    if (j.contains("start")) c.start = ts(j["start"], "start");
    c.n_days = j.value("n_days", c.n_days);
    c.train_days = j.value("train_days", c.train_days);
    c.normal_events = j.value("normal_events", c.normal_events);
    if (j.contains("report_delay_hours"))
      c.report_delay = from_hours(j["report_delay_hours"].get<double>());
    if (j.contains("repair_delay_hours"))
      c.repair_delay = from_hours(j["repair_delay_hours"].get<double>());
    if (j.contains("features")) {
      c.features.clear();
      for (const auto& f : j["features"]) {
        SignalSpec s;
        s.name = f.at("name").get<std::string>();
        s.base = f.value("base", 0.0);
        s.daily_amplitude = f.value("daily_amplitude", 0.0);
        s.daily_peak_hour = f.value("daily_peak_hour", 12.0);
        s.weekly_amplitude = f.value("weekly_amplitude", 0.0);
        s.seasonal_amplitude = f.value("seasonal_amplitude", 0.0);
        s.noise_sigma = f.value("noise_sigma", 0.1);
        s.ar_coefficient = f.value("ar_coefficient", 0.8);
        if (f.contains("couplings"))
          for (const auto& [src, coef] : f["couplings"].items())
            s.couplings.emplace_back(src, coef.get<double>());
        c.features.push_back(std::move(s));
      }
    }
    for (const auto& f : j.value("fault_injections", json::array())) {
      FaultInjection inj;
      auto type = parse_fault_type(f.at("type").get<std::string>());
      if (!type) throw ConfigError("synth config: unknown fault type");
      inj.type = *type;
      inj.feature = f.at("feature").get<std::string>();
      inj.start = ts(f.at("start"), "injection start");
      inj.duration = from_hours(f.at("duration_hours").get<double>());
      inj.magnitude = f.at("magnitude").get<double>();
      c.fault_injections.push_back(std::move(inj));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["substation_id"] = c.substation_id;
  j["start"] = format_timestamp(c.start);
  j["n_days"] = c.n_days;
  j["train_days"] = c.train_days;
  j["normal_events"] = c.normal_events;
  j["report_delay_hours"] = to_hours(c.report_delay);
  j["repair_delay_hours"] = to_hours(c.repair_delay);
  auto& feats = j["features"] = nlohmann::ordered_json::array();
  for (const auto& s : c.features) {
    nlohmann::ordered_json f;
    f["name"] = s.name;
    f["base"] = s.base;
    f["daily_amplitude"] = s.daily_amplitude;
    f["daily_peak_hour"] = s.daily_peak_hour;
    f["weekly_amplitude"] = s.weekly_amplitude;
    f["seasonal_amplitude"] = s.seasonal_amplitude;
    f["noise_sigma"] = s.noise_sigma;
    f["ar_coefficient"] = s.ar_coefficient;
    nlohmann::ordered_json cp = nlohmann::ordered_json::object();
    for (const auto& [src, coef] : s.couplings) cp[src] = coef;
    f["couplings"] = cp;
    feats.push_back(std::move(f));
  }
  auto& inj = j["fault_injections"] = nlohmann::ordered_json::array();
  for (const auto& f : c.fault_injections)
    inj.push_back({{"type", to_string(f.type)},
                   {"feature", f.feature},
                   {"start", format_timestamp(f.start)},
                   {"duration_hours", to_hours(f.duration)},
                   {"magnitude", f.magnitude}});
  return j.dump(2) + "\n";
}

}  // namespace dhfd
