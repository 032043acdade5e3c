#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dhfd/core_data.hpp"
#include "dhfd/preprocess.hpp"
#include "dhfd/scoring.hpp"

namespace dhfd {

inline constexpr Duration kDefaultWindow = std::chrono::hours(24);
inline constexpr double kReliabilityBeta = 0.5;

enum class Outcome { TP, FP, FN, TN };
std::string_view to_string(Outcome o);
Outcome classify(EventLabel label, bool detected);

struct EventOutcome {
  std::string event_id;
  EventLabel label = EventLabel::normal;
  bool detected = false;
  std::optional<Timestamp> t_detect;
  std::optional<Timestamp> t_report;
  Outcome outcome = Outcome::TN;
  std::optional<double> earliness;           // anomaly events
  std::optional<double> pointwise_accuracy;  // normal events
  std::optional<Duration> lead_time;         // detected anomaly events
};

// E = clamp((t_report - t_detect) / W, 0, 1); no detection gives 0.
double earliness(std::optional<Timestamp> t_detect, Timestamp t_report, Duration window);

// Fraction of unflagged samples. Throws std::domain_error on an empty window.
double pointwise_accuracy(const Mask& flags);

// F_beta; defined as 0 when precision and recall are both 0.
double f_beta(double precision, double recall, double beta = kReliabilityBeta);

// Outcome of one event from its test-window trace at the given threshold.
EventOutcome make_outcome(const EventSpec& event, const EventTrace& trace, int c_thr,
                          Duration window = kDefaultWindow);

struct ConfusionCounts {
  int tp = 0, fp = 0, fn = 0, tn = 0;
};

struct MetricsReport {
  ConfusionCounts counts;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> reliability;  // F_0.5
  std::optional<double> accuracy;     // mean pointwise accuracy over normal events
  std::optional<double> mean_earliness;  // over all anomaly events
  std::optional<Duration> mean_lead_time;  // over detected anomaly events only
  Duration window = kDefaultWindow;
  std::size_t n_events = 0;
};

MetricsReport evaluate_events(std::span<const EventOutcome> outcomes,
                              Duration window = kDefaultWindow);

std::string metrics_to_json(const MetricsReport& report, std::span<const EventOutcome> outcomes,
                            int c_thr);
// Columns A, R, Precision, Recall, E, L (d).
std::string metrics_table(const MetricsReport& report, std::string_view model_name);
std::string confusion_csv(const MetricsReport& report);

struct TuningEvent {
  std::string event_id;
  EventLabel label = EventLabel::normal;
  int c_max = 0;
};

struct ThresholdSelection {
  int c_thr = 1;
  double reliability = 0.0;
  std::vector<std::pair<int, double>> curve;  // (C_thr, mean fold reliability)
};

inline constexpr int kThresholdGridMin = 1;
inline constexpr int kThresholdGridMax = 100;
inline constexpr int kThresholdFolds = 5;

// Assigns each event a fold: events are ordered by id, shuffled within each
// label with the seed, then dealt round-robin.
std::vector<int> stratified_folds(std::span<const TuningEvent> events, int folds,
                                  std::uint64_t seed);

// Grid search over C_thr in [1, 100] maximising mean fold reliability; ties
// go to the larger threshold.
ThresholdSelection select_threshold(std::span<const TuningEvent> events, std::uint64_t seed,
                                    int folds = kThresholdFolds);

// Warnings when the earliness window cannot be fully reached. Throws
// std::invalid_argument if window <= 0.
std::vector<std::string> validate_window(Duration window, int c_thr, double samples_per_hour,
                                         Duration test_span = kTestWindow);

}  // namespace dhfd
