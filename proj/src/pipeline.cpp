#include "dhfd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dhfd/errors.hpp"
#include "dhfd/log.hpp"
#include "dhfd/plot.hpp"
#include "json.hpp"

namespace dhfd {

using json = nlohmann::ordered_json;

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::default_ae: return "default";
    case ModelVariant::conditional: return "conditional";
    case ModelVariant::day_of_year: return "day-of-year";
  }
  return "";
}

std::optional<ModelVariant> parse_variant(std::string_view text) {
  for (auto v : {ModelVariant::default_ae, ModelVariant::conditional, ModelVariant::day_of_year})
    if (text == to_string(v)) return v;
  return std::nullopt;
}

Conditioning to_conditioning(ModelVariant v) {
  switch (v) {
    case ModelVariant::default_ae: return Conditioning::none;
    case ModelVariant::conditional: return Conditioning::hour_dow;
    case ModelVariant::day_of_year: return Conditioning::hour_dow_doy;
  }
  return Conditioning::none;
}

std::string_view to_string(Manufacturer m) { return m == Manufacturer::m1 ? "m1" : "m2"; }

std::optional<Manufacturer> parse_manufacturer(std::string_view text) {
  if (text == "m1" || text == "M1") return Manufacturer::m1;
  if (text == "m2" || text == "M2") return Manufacturer::m2;
  return std::nullopt;
}

int default_threshold(Manufacturer m, ModelVariant v) {
  static constexpr int table[2][3] = {{17, 12, 9}, {24, 19, 8}};
  return table[m == Manufacturer::m1 ? 0 : 1][static_cast<int>(v)];
}

ScoreType default_score_type(Manufacturer m) {
  return m == Manufacturer::m1 ? ScoreType::mahalanobis : ScoreType::rmse;
}

RunConfig RunConfig::preset(Manufacturer m, ModelVariant v) {
  RunConfig c;
  c.manufacturer = m;
  c.variant = v;
  c.ae = m == Manufacturer::m1 ? AEConfig::m1() : AEConfig::m2();
  c.ae.conditioning = to_conditioning(v);
  c.score_type = default_score_type(m);
  c.detection.c_thr = default_threshold(m, v);
  return c;
}

fs::path RunConfig::manifest_path() const {
  return manifest.empty() ? data_dir / "manifest.csv" : manifest;
}

fs::path RunConfig::models_path() const { return model_dir.empty() ? out_dir / "models" : model_dir; }

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are captured
// per index and returned as messages (empty string = success).
template <typename Fn>
std::vector<std::string> parallel_for(std::size_t n, int jobs, Fn fn) {
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp(jobs, 1, 64));
  if (threads == 1 || n < 2) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  }
  return errors;
}

std::string safe_name(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  return s;
}

std::string summary_json(const BatchSummary& s) {
  json j = json::array();
  for (const auto& e : s.events)
    j.push_back({{"event_id", e.event_id}, {"ok", e.ok}, {"cached", e.cached}, {"error", e.error}});
  return j.dump(2) + "\n";
}

}  // namespace

std::size_t BatchSummary::failures() const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [](const auto& e) { return !e.ok; }));
}

// ------------------------------------------------------------------ data store

DataStore::DataStore(fs::path data_dir, LoadOptions options)
    : dir_(std::move(data_dir)), options_(options) {
  if (fs::exists(dir_ / "disturbances.csv")) disturbances_ = load_disturbances(dir_ / "disturbances.csv");
  if (fs::exists(dir_ / "reports.csv")) reports_ = load_reports(dir_ / "reports.csv");
}

fs::path DataStore::series_path(const std::string& substation_id) const {
  return dir_ / "timeseries" / (substation_id + ".csv");
}

TimeSeriesFrame DataStore::load_frame(const std::string& substation_id) const {
  const auto path = series_path(substation_id);
  if (!fs::exists(path)) throw Error("no time series file for substation '" + substation_id + "'");
  return load_timeseries(path, options_);
}

std::vector<Disturbance> DataStore::disturbances_for(const std::string& id) const {
  std::vector<Disturbance> out;
  for (const auto& d : disturbances_)
    if (d.substation_id == id) out.push_back(d);
  return out;
}

std::vector<IncidentReport> DataStore::reports_for(const std::string& id) const {
  std::vector<IncidentReport> out;
  for (const auto& r : reports_)
    if (r.substation_id == id) out.push_back(r);
  return out;
}

// ------------------------------------------------------------------ validate

std::string ValidationReport::to_text() const {
  std::ostringstream out;
  for (const auto& e : errors) out << "ERROR " << e.file << ": " << e.message << '\n';
  if (!completeness.empty()) {
    out << "substation_id,expected_samples,present_samples,completeness\n";
    for (const auto& c : completeness)
      out << c.substation_id << ',' << c.expected_samples << ',' << c.present_samples << ','
          << format_value(c.completeness) << '\n';
  }
  return out.str();
}

ValidationReport cmd_validate(const fs::path& data_dir, const LoadOptions& options) {
  ValidationReport rep;
  if (!fs::is_directory(data_dir)) {
    rep.errors.push_back({data_dir.string(), "not a directory"});
    return rep;
  }
  auto check = [&](const fs::path& p, auto&& fn) {
    try {
      fn(p);
    } catch (const std::exception& e) {
      rep.errors.push_back({p.filename().string(), e.what()});
    }
  };
  std::vector<fs::path> series;
  if (fs::is_directory(data_dir / "timeseries"))
    for (const auto& entry : fs::directory_iterator(data_dir / "timeseries"))
      if (entry.is_regular_file() && entry.path().extension() == ".csv") series.push_back(entry.path());
  std::sort(series.begin(), series.end());
  if (series.empty()) rep.errors.push_back({data_dir.string(), "no time series files found"});
  for (const auto& p : series) {
    check(p, [&](const fs::path& path) {
      auto frame = load_timeseries(path, options);
      if (frame.empty()) {
        rep.completeness.push_back({frame.substation_id(), 0, 0, 0.0});
        return;
      }
      rep.completeness.push_back(completeness(frame, frame.timestamps().front(),
                                              frame.timestamps().back() + kSampleInterval));
    });
  }
  if (fs::exists(data_dir / "disturbances.csv"))
    check(data_dir / "disturbances.csv", [](const fs::path& p) { load_disturbances(p); });
  if (fs::exists(data_dir / "reports.csv"))
    check(data_dir / "reports.csv", [](const fs::path& p) { load_reports(p); });
  if (fs::exists(data_dir / "manifest.csv"))
    check(data_dir / "manifest.csv", [](const fs::path& p) { load_manifest(p); });
  return rep;
}

// ------------------------------------------------------------------ train

TrainedEvent train_event(const TimeSeriesFrame& frame, std::span<const Disturbance> disturbances,
                         std::span<const IncidentReport> reports, const EventSpec& event,
                         const RunConfig& config) {
  const auto window = slice(frame, event.train_start, event.train_end);
  const auto mask = build_training_mask(window, disturbances, reports);
  AEConfig ae = config.ae;
  ae.conditioning = to_conditioning(config.variant);
  ae.seed = config.seed;
  const auto state = fit_preprocessor(window, mask.usable, ae.conditioning);
  const auto tf = transform(window, state);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < window.rows(); ++i)
    if (mask.usable[i] && !tf.row_all_missing[i]) rows.push_back(i);
  const auto x = select_rows(tf.values, rows);
  const auto cond = select_rows(conditioning_matrix(window.timestamps(), ae.conditioning), rows);

  AEModel model = init_model(ae, state.n_features());
  model.preprocessor = state;
  auto result = train(std::move(model), x, cond, ae);
  TrainedEvent out;
  out.bundle.score = fit_score_model(result.model, x, cond, config.score_type);
  out.bundle.model = std::move(result.model);
  out.report = std::move(result.report);
  return out;
}

std::string training_cache_key(const EventSpec& e, const RunConfig& c) {
  AEConfig ae = c.ae;
  ae.conditioning = to_conditioning(c.variant);
  ae.seed = c.seed;
  std::string key = e.substation_id + '|' + format_timestamp(e.train_start) + '|' +
                    format_timestamp(e.train_end) + '|' + std::string(to_string(c.score_type)) +
                    '|' + ae_config_to_json(ae);
  return fnv1a_hex(key);
}

BatchSummary cmd_train(const RunConfig& config) {
  const auto events = load_manifest(config.manifest_path());
  const DataStore store(config.data_dir, {config.snap});

  // Data-dependent part of the key: the substation file contents.
  std::map<std::string, std::string> data_hash;
  for (const auto& e : events) {
    if (data_hash.count(e.substation_id)) continue;
    const auto path = store.series_path(e.substation_id);
    data_hash[e.substation_id] = fs::exists(path) ? fnv1a_hex(read_file(path)) : "missing";
  }
  std::vector<std::string> keys;
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto key =
        fnv1a_hex(training_cache_key(events[i], config) + data_hash[events[i].substation_id]);
    auto [it, inserted] = group_of.emplace(key, groups.size());
    if (inserted) {
      groups.emplace_back();
      keys.push_back(key);
    }
    groups[it->second].push_back(i);
  }

  std::vector<EventStatus> status(events.size());
  const auto models = config.models_path();
  auto errors = parallel_for(groups.size(), config.jobs, [&](std::size_t g) {
    const auto& members = groups[g];
    bool all_cached = true;
    for (std::size_t i : members) {
      const auto dir = models / events[i].event_id;
      if (!fs::exists(dir / "model.json")) {
        all_cached = false;
        break;
      }
      try {
        auto j = json::parse(read_file(dir / "model.json"));
        if (j.value("cache_key", std::string()) != keys[g]) all_cached = false;
      } catch (const std::exception&) {
        all_cached = false;
      }
      if (!all_cached) break;
    }
    if (all_cached) {
      for (std::size_t i : members) status[i].cached = true;
      return;
    }
    const auto& first = events[members.front()];
    const auto frame = store.load_frame(first.substation_id);
    auto trained = train_event(frame, store.disturbances_for(first.substation_id),
                               store.reports_for(first.substation_id), first, config);
    trained.bundle.cache_key = keys[g];
    for (std::size_t i : members) {
      const auto dir = models / events[i].event_id;
      save_bundle(trained.bundle, dir);
      write_file(dir / "train_report.json", train_report_to_json(trained.report));
    }
  });

  BatchSummary summary;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i : groups[g]) {
      status[i].event_id = events[i].event_id;
      status[i].ok = errors[g].empty();
      status[i].error = errors[g];
    }
  }
  summary.events = std::move(status);
  std::sort(summary.events.begin(), summary.events.end(),
            [](const auto& a, const auto& b) { return a.event_id < b.event_id; });
  write_file(config.out_dir / "train_summary.json", summary_json(summary));
  return summary;
}

// ------------------------------------------------------------------ detect

Mask maintenance_mask(std::span<const Timestamp> timestamps, std::span<const Disturbance> tasks) {
  Mask m(timestamps.size(), 0);
  for (const auto& d : tasks) {
    if (d.kind != DisturbanceKind::task) continue;
    const auto lo = std::lower_bound(timestamps.begin(), timestamps.end(), d.timestamp);
    const auto hi = std::lower_bound(timestamps.begin(), timestamps.end(),
                                     d.timestamp + kMaintenanceSettling);
    for (auto it = lo; it != hi; ++it) m[static_cast<std::size_t>(it - timestamps.begin())] = 1;
  }
  return m;
}

EventTrace score_event(const ModelBundle& bundle, const TimeSeriesFrame& frame,
                       std::span<const Disturbance> disturbances, const EventSpec& event) {
  const auto window = slice(frame, event.test_start, event.test_end);
  const auto& pre = bundle.model.preprocessor;
  const auto tf = transform(window, pre);
  std::vector<std::size_t> rows;
  EventTrace trace;
  for (std::size_t i = 0; i < window.rows(); ++i) {
    if (tf.row_all_missing[i]) continue;  // a gap: the counter holds
    rows.push_back(i);
    trace.timestamps.push_back(window.timestamps()[i]);
  }
  if (rows.empty()) return trace;
  const auto x = select_rows(tf.values, rows);
  const auto cond = select_rows(conditioning_matrix(window.timestamps(), pre.conditioning), rows);
  auto points = score_points(bundle.score, bundle.model, x, cond);
  trace.scores.assign(points.scores.data(), points.scores.data() + points.scores.size());
  trace.flags = std::move(points.flags);
  const auto crit = run_criticality(trace.flags, maintenance_mask(trace.timestamps, disturbances),
                                    trace.timestamps);
  trace.criticality = crit.counter;
  return trace;
}

DetectSummary cmd_detect(const RunConfig& config) {
  const auto events = load_manifest(config.manifest_path());
  const DataStore store(config.data_dir, {config.snap});
  DetectSummary out;
  out.warnings = validate_window(config.window, config.detection.c_thr,
                                 config.detection.samples_per_hour);
  for (const auto& w : out.warnings) warn(w);

  std::vector<std::optional<DetectionRow>> rows(events.size());
  auto errors = parallel_for(events.size(), config.jobs, [&](std::size_t i) {
    const auto& e = events[i];
    const auto bundle = load_bundle(config.models_path() / e.event_id);
    const auto frame = store.load_frame(e.substation_id);
    const auto trace = score_event(bundle, frame, store.disturbances_for(e.substation_id), e);
    std::ostringstream csv;
    write_trace(trace, csv);
    write_file(config.traces_path() / (e.event_id + ".csv"), csv.str());

    CriticalitySeries series;
    series.timestamps = trace.timestamps;
    series.counter = trace.criticality;
    const auto det = detect_event(series, config.detection.c_thr);
    rows[i] = DetectionRow{e.event_id, e.label, det.detected, det.t_detect, trace.c_max()};

    LineChart chart;
    chart.title = e.event_id + " (" + std::string(to_string(e.label)) + ")";
    chart.y_label = "criticality";
    std::vector<double> c(trace.criticality.begin(), trace.criticality.end());
    chart.series.push_back({"criticality", trace.timestamps, c});
    chart.hline = config.detection.c_thr;
    chart.vline = e.report_time;
    write_file(config.out_dir / "plots" / (e.event_id + "_criticality.svg"), render_svg(chart));
  });

  std::ostringstream csv;
  csv << "event_id,label,detected,t_detect,c_max\n";
  for (std::size_t i = 0; i < events.size(); ++i) {
    out.batch.events.push_back({events[i].event_id, errors[i].empty(), false, errors[i]});
    if (!rows[i]) continue;
    const auto& r = *rows[i];
    out.detections.push_back(r);
  }
  std::sort(out.detections.begin(), out.detections.end(),
            [](const auto& a, const auto& b) { return a.event_id < b.event_id; });
  std::sort(out.batch.events.begin(), out.batch.events.end(),
            [](const auto& a, const auto& b) { return a.event_id < b.event_id; });
  for (const auto& r : out.detections)
    csv << r.event_id << ',' << to_string(r.label) << ',' << (r.detected ? "true" : "false") << ','
        << (r.t_detect ? format_timestamp(*r.t_detect) : "") << ',' << r.c_max << '\n';
  write_file(config.out_dir / "detections.csv", csv.str());
  write_file(config.out_dir / "detect_summary.json", summary_json(out.batch));
  return out;
}

// ------------------------------------------------------------------ tune

std::vector<TuningEvent> tuning_events(const fs::path& traces_dir,
                                       std::span<const EventSpec> events) {
  std::vector<TuningEvent> out;
  for (const auto& e : events) {
    const auto path = traces_dir / (e.event_id + ".csv");
    if (!fs::exists(path)) {
      warn("no trace for event '" + e.event_id + "'");
      continue;
    }
    const auto trace = load_trace(path);
    int c_max = 0;
    for (std::size_t i = 0; i < trace.size(); ++i)
      if (trace.timestamps[i] >= e.test_start && trace.timestamps[i] < e.test_end)
        c_max = std::max(c_max, trace.criticality[i]);
    out.push_back({e.event_id, e.label, c_max});
  }
  return out;
}

ThresholdSelection cmd_tune(const fs::path& traces_dir, const fs::path& manifest,
                            std::uint64_t seed, const fs::path& out_dir) {
  const auto events = load_manifest(manifest);
  const auto tuning = tuning_events(traces_dir, events);
  const auto sel = select_threshold(tuning, seed);
  std::ostringstream curve;
  curve << "c_thr,reliability\n";
  for (const auto& [c, r] : sel.curve) curve << c << ',' << format_value(r) << '\n';
  write_file(out_dir / "reliability_curve.csv", curve.str());
  json j;
  j["c_thr"] = sel.c_thr;
  j["reliability"] = sel.reliability;
  j["seed"] = seed;
  j["folds"] = kThresholdFolds;
  j["n_events"] = tuning.size();
  write_file(out_dir / "threshold.json", j.dump(2) + "\n");
  return sel;
}

// ------------------------------------------------------------------ evaluate

EvaluationResult cmd_evaluate(const fs::path& traces_dir, const fs::path& manifest, int c_thr,
                              Duration window, const fs::path& out_dir,
                              std::string_view model_name) {
  const auto events = load_manifest(manifest);
  EvaluationResult res;
  std::ostringstream plot;
  plot << "event_id,timestamp,criticality,c_thr\n";
  for (const auto& e : events) {
    const auto path = traces_dir / (e.event_id + ".csv");
    if (!fs::exists(path)) {
      warn("no trace for event '" + e.event_id + "'");
      continue;
    }
    const auto trace = load_trace(path);
    res.outcomes.push_back(make_outcome(e, trace, c_thr, window));
    for (std::size_t i = 0; i < trace.size(); ++i)
      plot << e.event_id << ',' << format_timestamp(trace.timestamps[i]) << ','
           << trace.criticality[i] << ',' << c_thr << '\n';
  }
  res.report = evaluate_events(res.outcomes, window);
  write_file(out_dir / "metrics.json", metrics_to_json(res.report, res.outcomes, c_thr));
  write_file(out_dir / "metrics.txt", metrics_table(res.report, model_name));
  write_file(out_dir / "confusion.csv", confusion_csv(res.report));
  write_file(out_dir / "criticality_plot_data.csv", plot.str());
  return res;
}

// ------------------------------------------------------------------ attribute

AttributionReport cmd_attribute(const AttributeRequest& req) {
  const auto events =
      load_manifest(req.manifest.empty() ? req.data_dir / "manifest.csv" : req.manifest);
  auto it = std::find_if(events.begin(), events.end(),
                         [&](const auto& e) { return e.event_id == req.event_id; });
  if (it == events.end()) throw Error("event '" + req.event_id + "' not in manifest");
  const auto& event = *it;
  const auto bundle = load_bundle(req.bundle_dir);
  const DataStore store(req.data_dir);
  const auto frame = store.load_frame(event.substation_id);

  Timestamp start = req.start.value_or(event.test_start);
  const Timestamp end = req.end.value_or(event.test_end);
  if (!req.start && req.trace && fs::exists(*req.trace)) {
    const auto trace = load_trace(*req.trace);
    const auto outcome = make_outcome(event, trace, req.c_thr);
    if (outcome.t_detect) start = *outcome.t_detect;
  }
  auto rep = attribution_report(bundle.model, frame, start, end, req.arcana, req.top_k);

  write_file(req.out_dir / "attribution.json", attribution_to_json(rep));
  for (const auto& s : rep.series) {
    std::ostringstream csv;
    write_feature_series(s, csv);
    write_file(req.out_dir / (safe_name(s.feature) + ".csv"), csv.str());
    LineChart chart;
    char title[160];
    std::snprintf(title, sizeof title, "%s (importance %.2f)", s.feature.c_str(), s.importance);
    chart.title = title;
    chart.y_label = s.feature;
    chart.series.push_back({"actual", s.timestamps, s.actual});
    chart.series.push_back({"reconstructed", s.timestamps, s.reconstructed});
    chart.vline = event.report_time;
    write_file(req.out_dir / (safe_name(s.feature) + ".svg"), render_svg(chart));
  }
  return rep;
}

// ------------------------------------------------------------------ synth

std::vector<SynthDataset> cmd_synth(std::span<const SynthConfig> configs, const fs::path& out_dir) {
  std::vector<SynthDataset> datasets;
  for (const auto& c : configs) datasets.push_back(generate(c));
  write_dataset(datasets, out_dir);
  return datasets;
}

}  // namespace dhfd
