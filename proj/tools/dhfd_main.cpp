#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dhfd/errors.hpp"
#include "dhfd/pipeline.hpp"
#include "json.hpp"

using namespace dhfd;

namespace {

struct Common {
  std::string data;
  std::string manifest;
  std::string out = "out";
  std::string model_dir;
  std::optional<std::uint64_t> seed;
  std::string manufacturer = "m1";
  std::string variant = "default";
  std::string score;
  std::optional<int> cthr;
  std::string threshold_file;
  double window_hours = 24.0;
  int jobs = 1;
  bool snap = false;

  // AE overrides
  std::vector<int> hidden;
  std::optional<double> latent_fraction;
  std::optional<double> learning_rate;
  std::optional<double> noise;
  std::optional<int> batch;
  std::optional<int> epochs;
  std::optional<int> patience;
};

void add_data_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--data", c.data, "Data directory")->required();
  cmd->add_option("--manifest", c.manifest, "Event manifest (default <data>/manifest.csv)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--model-dir", c.model_dir, "Model bundle directory (default <out>/models)");
  cmd->add_flag("--snap", c.snap, "Snap off-grid timestamps instead of rejecting them");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::Range(1, 64));
}

void add_model_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--manufacturer", c.manufacturer, "Hyperparameter preset")
      ->check(CLI::IsMember({"m1", "m2"}));
  cmd->add_option("--variant", c.variant, "Model variant")
      ->check(CLI::IsMember({"default", "conditional", "day-of-year"}));
  cmd->add_option("--score", c.score, "Anomaly score")->check(CLI::IsMember({"rmse", "mahalanobis"}));
  cmd->add_option("--hidden", c.hidden, "Hidden layer widths");
  cmd->add_option("--latent-fraction", c.latent_fraction, "Latent width as a fraction of features");
  cmd->add_option("--learning-rate", c.learning_rate, "Adam learning rate");
  cmd->add_option("--noise", c.noise, "Denoising noise standard deviation");
  cmd->add_option("--batch-size", c.batch, "Mini-batch size");
  cmd->add_option("--epochs", c.epochs, "Maximum epochs");
  cmd->add_option("--patience", c.patience, "Early-stopping patience");
}

void add_threshold_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--cthr", c.cthr, "Criticality threshold")->check(CLI::Range(1, 100000));
  cmd->add_option("--threshold-file", c.threshold_file, "threshold.json written by `tune`");
  cmd->add_option("--window-hours", c.window_hours, "Earliness window W in hours");
}

int resolve_cthr(const Common& c, int fallback) {
  if (c.cthr) return *c.cthr;
  if (!c.threshold_file.empty()) {
    std::ifstream in(c.threshold_file);
    if (!in) throw Error("cannot open " + c.threshold_file);
    return nlohmann::json::parse(in).at("c_thr").get<int>();
  }
  return fallback;
}

RunConfig make_config(const Common& c) {
  const auto m = *parse_manufacturer(c.manufacturer);
  const auto v = *parse_variant(c.variant);
  RunConfig rc = RunConfig::preset(m, v);
  rc.data_dir = c.data;
  rc.manifest = c.manifest;
  rc.model_dir = c.model_dir;
  rc.out_dir = c.out;
  rc.jobs = c.jobs;
  rc.snap = c.snap;
  if (c.seed) rc.seed = *c.seed;
  if (!c.score.empty()) rc.score_type = *parse_score_type(c.score);
  if (!c.hidden.empty()) rc.ae.hidden_units = c.hidden;
  if (c.latent_fraction) rc.ae.latent_fraction = *c.latent_fraction;
  if (c.learning_rate) rc.ae.learning_rate = *c.learning_rate;
  if (c.noise) rc.ae.noise_std = *c.noise;
  if (c.batch) rc.ae.batch_size = *c.batch;
  if (c.epochs) rc.ae.epochs = *c.epochs;
  if (c.patience) rc.ae.early_stop_patience = *c.patience;
  rc.detection.c_thr = resolve_cthr(c, rc.detection.c_thr);
  rc.window = from_hours(c.window_hours);
  return rc;
}

int report_batch(const BatchSummary& s, std::string_view verb) {
  std::size_t cached = 0;
  for (const auto& e : s.events) {
    if (!e.ok) std::cerr << "event " << e.event_id << ": " << e.error << '\n';
    cached += e.cached;
  }
  std::cout << verb << ' ' << s.events.size() - s.failures() << '/' << s.events.size() << " events";
  if (cached) std::cout << " (" << cached << " cached)";
  std::cout << '\n';
  return !s.events.empty() && s.failures() == s.events.size() ? 1 : 0;
}

std::optional<Timestamp> parse_opt_time(const std::string& s) {
  if (s.empty()) return std::nullopt;
  auto t = parse_timestamp(s);
  if (!t) throw CLI::ValidationError("invalid timestamp '" + s + "'");
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early fault detection for district heating substations"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Configuration file (TOML/INI); flags take precedence");

  Common common;

  auto* validate = app.add_subcommand("validate", "Check input files and report completeness");
  validate->add_option("--data", common.data, "Data directory")->required();
  validate->add_flag("--snap", common.snap, "Snap off-grid timestamps instead of rejecting them");

  auto* train = app.add_subcommand("train", "Train one model bundle per event");
  add_data_flags(train, common);
  add_model_flags(train, common);

  auto* detect = app.add_subcommand("detect", "Score test windows and detect events");
  add_data_flags(detect, common);
  add_model_flags(detect, common);
  add_threshold_flags(detect, common);

  std::string traces;
  auto* tune = app.add_subcommand("tune", "Select C_thr by cross-validated grid search");
  tune->add_option("--traces", traces, "Trace directory (default <out>/traces)");
  tune->add_option("--manifest", common.manifest, "Event manifest")->required();
  tune->add_option("--seed", common.seed, "Fold assignment seed");
  tune->add_option("--out", common.out, "Output directory");

  std::string model_name = "model";
  auto* evaluate = app.add_subcommand("evaluate", "Compute eventwise metrics");
  evaluate->add_option("--traces", traces, "Trace directory (default <out>/traces)");
  evaluate->add_option("--manifest", common.manifest, "Event manifest")->required();
  evaluate->add_option("--out", common.out, "Output directory");
  evaluate->add_option("--name", model_name, "Row label in the metrics table");
  evaluate->add_option("--manufacturer", common.manufacturer, "Preset for the default C_thr")
      ->check(CLI::IsMember({"m1", "m2"}));
  evaluate->add_option("--variant", common.variant, "Preset for the default C_thr")
      ->check(CLI::IsMember({"default", "conditional", "day-of-year"}));
  add_threshold_flags(evaluate, common);

  AttributeRequest areq;
  std::string bundle, event_id, start, end, trace;
  auto* attribute = app.add_subcommand("attribute", "Attribute an anomaly to features with ARCANA");
  attribute->add_option("--bundle", bundle, "Model bundle directory")->required();
  attribute->add_option("--data", common.data, "Data directory")->required();
  attribute->add_option("--manifest", common.manifest, "Event manifest (default <data>/manifest.csv)");
  attribute->add_option("--event", event_id, "Event id")->required();
  attribute->add_option("--start", start, "Window start (default: detection time or test start)");
  attribute->add_option("--end", end, "Window end (default: test end)");
  attribute->add_option("--trace", trace, "Criticality trace used to locate the detection time");
  attribute->add_option("--alpha", areq.arcana.alpha, "L1 weight")->check(CLI::Range(0.0, 1.0));
  attribute->add_option("--max-iters", areq.arcana.max_iters, "Iteration budget");
  attribute->add_option("--step-size", areq.arcana.step_size, "Initial step size");
  attribute->add_option("--tol", areq.arcana.convergence_tol, "Relative convergence tolerance");
  attribute->add_option("--top-k", areq.top_k, "Number of features to report");
  attribute->add_option("--out", common.out, "Output directory");
  add_threshold_flags(attribute, common);

  std::vector<std::string> synth_configs;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--synth-config", synth_configs, "Generator JSON config (one per substation)");
  synth->add_option("--seed", common.seed, "Override the generator seed");
  synth->add_option("--out", common.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      const auto rep = cmd_validate(common.data, {common.snap});
      std::cout << rep.to_text();
      if (rep.errors.empty() && rep.completeness.empty()) std::cerr << "no data found\n";
      return rep.exit_code();
    }
    if (*train) {
      const auto rc = make_config(common);
      return report_batch(cmd_train(rc), "trained");
    }
    if (*detect) {
      const auto rc = make_config(common);
      const auto res = cmd_detect(rc);
      for (const auto& d : res.detections)
        std::cout << d.event_id << ' ' << to_string(d.label) << ' '
                  << (d.detected ? "detected " + format_timestamp(*d.t_detect) : "not-detected")
                  << " c_max=" << d.c_max << '\n';
      return report_batch(res.batch, "scored");
    }
    const fs::path traces_dir = traces.empty() ? fs::path(common.out) / "traces" : fs::path(traces);
    if (*tune) {
      const auto sel = cmd_tune(traces_dir, common.manifest, common.seed.value_or(0), common.out);
      std::printf("c_thr=%d reliability=%.4f\n", sel.c_thr, sel.reliability);
      return 0;
    }
    if (*evaluate) {
      const int fallback =
          default_threshold(*parse_manufacturer(common.manufacturer), *parse_variant(common.variant));
      const int c_thr = resolve_cthr(common, fallback);
      const auto res = cmd_evaluate(traces_dir, common.manifest, c_thr, from_hours(common.window_hours),
                                    common.out, model_name);
      std::cout << metrics_table(res.report, model_name);
      return 0;
    }
    if (*attribute) {
      areq.bundle_dir = bundle;
      areq.data_dir = common.data;
      areq.manifest = common.manifest.empty() ? fs::path(common.data) / "manifest.csv"
                                              : fs::path(common.manifest);
      areq.event_id = event_id;
      areq.start = parse_opt_time(start);
      areq.end = parse_opt_time(end);
      if (!trace.empty()) areq.trace = trace;
      areq.c_thr = resolve_cthr(common, areq.c_thr);
      areq.out_dir = common.out;
      const auto rep = cmd_attribute(areq);
      for (const auto& f : rep.ranking.top_features())
        std::cout << f << '\n';
      return 0;
    }
    if (*synth) {
      std::vector<SynthConfig> configs;
      for (const auto& path : synth_configs) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        configs.push_back(synth_config_from_json(ss.str()));
      }
      if (configs.empty()) configs.emplace_back();
      if (common.seed)
        for (std::size_t i = 0; i < configs.size(); ++i) configs[i].seed = *common.seed + i;
      const auto ds = cmd_synth(configs, common.out);
      for (const auto& d : ds)
        std::cout << d.frame.substation_id() << ": " << d.frame.rows() << " rows, "
                  << d.events.size() << " events\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
