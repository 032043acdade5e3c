#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dhfd/arcana.hpp"
#include "dhfd/bundle.hpp"
#include "dhfd/evaluation.hpp"
#include "dhfd/synthgen.hpp"

namespace dhfd {

namespace fs = std::filesystem;

enum class ModelVariant { default_ae, conditional, day_of_year };
std::string_view to_string(ModelVariant v);
std::optional<ModelVariant> parse_variant(std::string_view text);
Conditioning to_conditioning(ModelVariant v);

enum class Manufacturer { m1, m2 };
std::string_view to_string(Manufacturer m);
std::optional<Manufacturer> parse_manufacturer(std::string_view text);

// Criticality thresholds selected per manufacturer and variant.
int default_threshold(Manufacturer m, ModelVariant v);
ScoreType default_score_type(Manufacturer m);

struct RunConfig {
  fs::path data_dir;
  fs::path manifest;   // defaults to <data_dir>/manifest.csv when empty
  fs::path model_dir;  // defaults to <out_dir>/models when empty
  fs::path out_dir;
  Manufacturer manufacturer = Manufacturer::m1;
  ModelVariant variant = ModelVariant::default_ae;
  AEConfig ae = AEConfig::m1();
  ScoreType score_type = ScoreType::mahalanobis;
  DetectionConfig detection;
  Duration window = kDefaultWindow;
  std::uint64_t seed = 0;  // initialisation and noise seed; overrides ae.seed
  int jobs = 1;
  bool snap = false;

  // Manufacturer preset: AE hyperparameters, score type and C_thr.
  static RunConfig preset(Manufacturer m, ModelVariant v);

  fs::path manifest_path() const;
  fs::path models_path() const;
  fs::path traces_path() const { return out_dir / "traces"; }
};

// Time series are read from <data>/timeseries/<substation_id>.csv;
// disturbances.csv and reports.csv at the data root are optional.
class DataStore {
 public:
  explicit DataStore(fs::path data_dir, LoadOptions options = {});

  const std::vector<Disturbance>& disturbances() const { return disturbances_; }
  const std::vector<IncidentReport>& reports() const { return reports_; }
  fs::path series_path(const std::string& substation_id) const;
  TimeSeriesFrame load_frame(const std::string& substation_id) const;

  std::vector<Disturbance> disturbances_for(const std::string& substation_id) const;
  std::vector<IncidentReport> reports_for(const std::string& substation_id) const;

 private:
  fs::path dir_;
  LoadOptions options_;
  std::vector<Disturbance> disturbances_;
  std::vector<IncidentReport> reports_;
};

// ------------------------------------------------------------------ validate

struct FileIssue {
  std::string file;
  std::string message;
};

struct ValidationReport {
  std::vector<FileIssue> errors;
  std::vector<CompletenessStat> completeness;
  int exit_code() const { return errors.empty() && !completeness.empty() ? 0 : 1; }
  std::string to_text() const;
};

ValidationReport cmd_validate(const fs::path& data_dir, const LoadOptions& options = {});

// ------------------------------------------------------------------ train

struct TrainedEvent {
  ModelBundle bundle;
  TrainReport report;
};

// Fits preprocessing, the autoencoder and the score model on the masked
// training window of one event.
TrainedEvent train_event(const TimeSeriesFrame& frame, std::span<const Disturbance> disturbances,
                         std::span<const IncidentReport> reports, const EventSpec& event,
                         const RunConfig& config);

std::string training_cache_key(const EventSpec& event, const RunConfig& config);

struct EventStatus {
  std::string event_id;
  bool ok = false;
  bool cached = false;
  std::string error;
};

struct BatchSummary {
  std::vector<EventStatus> events;
  std::size_t failures() const;
};

// One bundle per event under models_path()/<event_id>. Events with identical
// substation, training window and configuration share one training run.
BatchSummary cmd_train(const RunConfig& config);

// ------------------------------------------------------------------ detect

// Maintenance mask for trace rows: true within [task, task + 4 h).
Mask maintenance_mask(std::span<const Timestamp> timestamps, std::span<const Disturbance> tasks);

EventTrace score_event(const ModelBundle& bundle, const TimeSeriesFrame& frame,
                       std::span<const Disturbance> disturbances, const EventSpec& event);

struct DetectionRow {
  std::string event_id;
  EventLabel label;
  bool detected = false;
  std::optional<Timestamp> t_detect;
  int c_max = 0;
};

struct DetectSummary {
  BatchSummary batch;
  std::vector<DetectionRow> detections;
  std::vector<std::string> warnings;
};

// Writes traces/<event_id>.csv, plots/<event_id>_criticality.svg and
// detections.csv under out_dir.
DetectSummary cmd_detect(const RunConfig& config);

// ------------------------------------------------------------------ tune

std::vector<TuningEvent> tuning_events(const fs::path& traces_dir,
                                       std::span<const EventSpec> events);

// Writes reliability_curve.csv and threshold.json under out_dir.
ThresholdSelection cmd_tune(const fs::path& traces_dir, const fs::path& manifest,
                            std::uint64_t seed, const fs::path& out_dir);

// ------------------------------------------------------------------ evaluate

struct EvaluationResult {
  MetricsReport report;
  std::vector<EventOutcome> outcomes;
};

// Writes metrics.json, metrics.txt, confusion.csv and criticality_plot_data.csv.
EvaluationResult cmd_evaluate(const fs::path& traces_dir, const fs::path& manifest, int c_thr,
                              Duration window, const fs::path& out_dir,
                              std::string_view model_name = "model");

// ------------------------------------------------------------------ attribute

struct AttributeRequest {
  fs::path bundle_dir;
  fs::path data_dir;
  fs::path manifest;
  std::string event_id;
  std::optional<Timestamp> start;  // defaults: detection time (from the trace) or test start
  std::optional<Timestamp> end;    // defaults: test end
  std::optional<fs::path> trace;
  int c_thr = 17;
  ArcanaConfig arcana;
  std::size_t top_k = 3;
  fs::path out_dir;
};

// Writes attribution.json plus <feature>.csv and <feature>.svg per top-k feature.
AttributionReport cmd_attribute(const AttributeRequest& request);

// ------------------------------------------------------------------ synth

std::vector<SynthDataset> cmd_synth(std::span<const SynthConfig> configs, const fs::path& out_dir);

}  // namespace dhfd
