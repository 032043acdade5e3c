#include "dhfd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dhfd/errors.hpp"
#include "json.hpp"

namespace dhfd {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::TP: return "TP";
    case Outcome::FP: return "FP";
    case Outcome::FN: return "FN";
    case Outcome::TN: return "TN";
  }
  return "";
}

Outcome classify(EventLabel label, bool detected) {
  if (label == EventLabel::anomaly) return detected ? Outcome::TP : Outcome::FN;
  return detected ? Outcome::FP : Outcome::TN;
}

double earliness(std::optional<Timestamp> t_detect, Timestamp t_report, Duration window) {
  if (window <= Duration::zero()) throw std::invalid_argument("earliness window must be positive");
  if (!t_detect) return 0.0;
  const double ratio = static_cast<double>((t_report - *t_detect).count()) /
                       static_cast<double>(window.count());
  return std::max(0.0, std::min(1.0, ratio));
}

double pointwise_accuracy(const Mask& flags) {
  if (flags.empty()) throw std::domain_error("pointwise accuracy undefined on an empty window");
  const auto flagged = std::count_if(flags.begin(), flags.end(), [](auto f) { return f != 0; });
  return 1.0 - static_cast<double>(flagged) / static_cast<double>(flags.size());
}

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

EventOutcome make_outcome(const EventSpec& event, const EventTrace& trace, int c_thr,
                          Duration window) {
  if (c_thr < 1) throw std::invalid_argument("C_thr must be at least 1");
  EventOutcome o;
  o.event_id = event.event_id;
  o.label = event.label;
  o.t_report = event.report_time;
  Mask flags;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const Timestamp t = trace.timestamps[i];
    if (t < event.test_start || t >= event.test_end) continue;
    flags.push_back(trace.flags[i]);
    if (!o.detected && trace.criticality[i] >= c_thr) {
      o.detected = true;
      o.t_detect = t;
    }
  }
  o.outcome = classify(event.label, o.detected);
  if (event.label == EventLabel::anomaly) {
    const Timestamp report = event.report_time.value_or(event.test_end);
    o.earliness = earliness(o.t_detect, report, window);
    if (o.t_detect) o.lead_time = report - *o.t_detect;
  } else if (!flags.empty()) {
    o.pointwise_accuracy = pointwise_accuracy(flags);
  }
  return o;
}

MetricsReport evaluate_events(std::span<const EventOutcome> outcomes, Duration window) {
  MetricsReport r;
  r.window = window;
  r.n_events = outcomes.size();
  double acc_sum = 0.0, e_sum = 0.0;
  int acc_n = 0, e_n = 0, lead_n = 0;
  Duration lead_sum{0};
  for (const auto& o : outcomes) {
    switch (o.outcome) {
      case Outcome::TP: ++r.counts.tp; break;
      case Outcome::FP: ++r.counts.fp; break;
      case Outcome::FN: ++r.counts.fn; break;
      case Outcome::TN: ++r.counts.tn; break;
    }
    if (o.label == EventLabel::anomaly) {
      e_sum += o.earliness.value_or(0.0);
      ++e_n;
      if (o.detected && o.lead_time) {
        lead_sum += *o.lead_time;
        ++lead_n;
      }
    } else if (o.pointwise_accuracy) {
      acc_sum += *o.pointwise_accuracy;
      ++acc_n;
    }
  }
  const auto& c = r.counts;
  const int anomalies = c.tp + c.fn;
  const int normals = c.fp + c.tn;
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
  if (anomalies > 0) r.recall = static_cast<double>(c.tp) / anomalies;
  if (anomalies > 0 && normals > 0) r.reliability = f_beta(r.precision.value_or(0.0), *r.recall);
  if (acc_n > 0) r.accuracy = acc_sum / acc_n;
  if (e_n > 0) r.mean_earliness = e_sum / e_n;
  if (lead_n > 0) r.mean_lead_time = Duration(lead_sum.count() / lead_n);
  return r;
}

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string cell(const std::optional<double>& v, int decimals) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
  return buf;
}

}  // namespace

std::string metrics_to_json(const MetricsReport& r, std::span<const EventOutcome> outcomes,
                            int c_thr) {
  nlohmann::ordered_json j;
  j["c_thr"] = c_thr;
  j["window_hours"] = to_hours(r.window);
  j["n_events"] = r.n_events;
  j["counts"] = {{"TP", r.counts.tp}, {"FP", r.counts.fp}, {"FN", r.counts.fn}, {"TN", r.counts.tn}};
  j["accuracy"] = opt(r.accuracy);
  j["reliability"] = opt(r.reliability);
  j["precision"] = opt(r.precision);
  j["recall"] = opt(r.recall);
  j["earliness"] = opt(r.mean_earliness);
  j["lead_time_days"] =
      r.mean_lead_time ? nlohmann::ordered_json(to_days(*r.mean_lead_time)) : nullptr;
  auto& events = j["events"] = nlohmann::ordered_json::array();
  for (const auto& o : outcomes) {
    nlohmann::ordered_json e;
    e["event_id"] = o.event_id;
    e["label"] = to_string(o.label);
    e["outcome"] = to_string(o.outcome);
    e["detected"] = o.detected;
    e["t_detect"] = o.t_detect ? nlohmann::ordered_json(format_timestamp(*o.t_detect)) : nullptr;
    e["t_report"] = o.t_report ? nlohmann::ordered_json(format_timestamp(*o.t_report)) : nullptr;
    e["earliness"] = opt(o.earliness);
    e["pointwise_accuracy"] = opt(o.pointwise_accuracy);
    e["lead_time_days"] = o.lead_time ? nlohmann::ordered_json(to_days(*o.lead_time)) : nullptr;
    events.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::string metrics_table(const MetricsReport& r, std::string_view model_name) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-20s %6s %6s %10s %8s %6s %7s\n", "Model", "A", "R",
                "Precision", "Recall", "E", "L (d)");
  out += buf;
  const std::optional<double> lead =
      r.mean_lead_time ? std::optional<double>(to_days(*r.mean_lead_time)) : std::nullopt;
  std::snprintf(buf, sizeof buf, "%-20s %6s %6s %10s %8s %6s %7s\n",
                std::string(model_name).c_str(), cell(r.accuracy, 2).c_str(),
                cell(r.reliability, 2).c_str(), cell(r.precision, 2).c_str(),
                cell(r.recall, 2).c_str(), cell(r.mean_earliness, 2).c_str(),
                cell(lead, 1).c_str());
  out += buf;
  return out;
}

std::string confusion_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << "actual,predicted_anomaly,predicted_normal\n";
  out << "anomaly," << r.counts.tp << ',' << r.counts.fn << '\n';
  out << "normal," << r.counts.fp << ',' << r.counts.tn << '\n';
  return out.str();
}

std::vector<int> stratified_folds(std::span<const TuningEvent> events, int folds,
                                  std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("need at least two folds");
  std::vector<int> assignment(events.size(), -1);
  std::mt19937_64 rng(seed);
  for (EventLabel label : {EventLabel::anomaly, EventLabel::normal}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < events.size(); ++i)
      if (events[i].label == label) idx.push_back(i);
    if (idx.size() < static_cast<std::size_t>(folds))
      throw StratificationError("need at least " + std::to_string(folds) + " " +
                                std::string(to_string(label)) + " events, found " +
                                std::to_string(idx.size()));
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return events[a].event_id < events[b].event_id;
    });
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size(); ++k)
      assignment[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }
  return assignment;
}

ThresholdSelection select_threshold(std::span<const TuningEvent> events, std::uint64_t seed,
                                    int folds) {
  const auto fold_of = stratified_folds(events, folds, seed);
  ThresholdSelection best;
  best.reliability = -1.0;
  for (int c_thr = kThresholdGridMin; c_thr <= kThresholdGridMax; ++c_thr) {
    double sum = 0.0;
    for (int f = 0; f < folds; ++f) {
      ConfusionCounts c;
      for (std::size_t i = 0; i < events.size(); ++i) {
        if (fold_of[i] != f) continue;
        const bool detected = events[i].c_max >= c_thr;
        switch (classify(events[i].label, detected)) {
          case Outcome::TP: ++c.tp; break;
          case Outcome::FP: ++c.fp; break;
          case Outcome::FN: ++c.fn; break;
          case Outcome::TN: ++c.tn; break;
        }
      }
      const double p = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
      const double rec = static_cast<double>(c.tp) / (c.tp + c.fn);
      sum += f_beta(p, rec);
    }
    const double mean = sum / folds;
    best.curve.emplace_back(c_thr, mean);
    if (mean >= best.reliability - 1e-12) {
      best.reliability = std::max(mean, best.reliability);
      best.c_thr = c_thr;
    }
  }
  return best;
}

std::vector<std::string> validate_window(Duration window, int c_thr, double samples_per_hour,
                                         Duration test_span) {
  if (window <= Duration::zero()) throw std::invalid_argument("window must be positive");
  if (samples_per_hour <= 0.0) throw std::invalid_argument("sampling rate must be positive");
  std::vector<std::string> warnings;
  const double delay_h = static_cast<double>(c_thr) / samples_per_hour;
  const double window_h = to_hours(window);
  const double span_h = to_hours(test_span);
  if (window_h > span_h)
    warnings.push_back("window of " + std::to_string(window_h) + " h exceeds the test span of " +
                       std::to_string(span_h) + " h");
  if (window_h > span_h - delay_h) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "window of %.1f h exceeds test span minus detection delay (%.1f h - %.1f h); "
                  "maximum earliness is %.3f",
                  window_h, span_h, delay_h, std::max(0.0, (span_h - delay_h) / window_h));
    warnings.emplace_back(buf);
  }
  return warnings;
}

}  // namespace dhfd
