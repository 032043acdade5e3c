#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dhfd/errors.hpp"
#include "dhfd/pipeline.hpp"

namespace py = pybind11;
using namespace dhfd;

namespace {

Timestamp parse_or_throw(const std::string& text) {
  auto t = parse_timestamp(text);
  if (!t) throw py::value_error("bad timestamp '" + text + "'");
  return *t;
}

RunConfig make_run(const fs::path& data, const fs::path& out, const std::string& manufacturer,
                   const std::string& variant, std::optional<int> epochs, std::uint64_t seed,
                   int jobs, std::optional<int> c_thr) {
  const auto m = parse_manufacturer(manufacturer);
  const auto v = parse_variant(variant);
  if (!m) throw py::value_error("unknown manufacturer '" + manufacturer + "'");
  if (!v) throw py::value_error("unknown variant '" + variant + "'");
  auto rc = RunConfig::preset(*m, *v);
  rc.data_dir = data;
  rc.out_dir = out;
  rc.seed = seed;
  rc.jobs = jobs;
  if (epochs) rc.ae.epochs = *epochs;
  if (c_thr) rc.detection.c_thr = *c_thr;
  return rc;
}

py::list batch_list(const BatchSummary& s) {
  py::list out;
  for (const auto& e : s.events)
    out.append(py::dict(py::arg("event_id") = e.event_id, py::arg("ok") = e.ok,
                        py::arg("cached") = e.cached, py::arg("error") = e.error));
  return out;
}

}  // namespace

PYBIND11_MODULE(_dhfd, m) {
  m.doc() = "District heating substation fault detection toolkit";

  py::register_exception<Error>(m, "Error");

  m.def("f_beta", &f_beta, py::arg("precision"), py::arg("recall"), py::arg("beta") = kReliabilityBeta);
  m.def(
      "earliness",
      [](std::optional<double> lead_hours, double window_hours) {
        const Timestamp report{};
        std::optional<Timestamp> t;
        if (lead_hours) t = report - from_hours(*lead_hours);
        return earliness(t, report, from_hours(window_hours));
      },
      py::arg("lead_hours"), py::arg("window_hours") = 24.0,
      "Earliness for a detection `lead_hours` before the report (None: no detection).");
  m.def(
      "run_criticality",
      [](const std::vector<std::uint8_t>& flags, std::vector<std::uint8_t> maintenance) {
        return run_criticality(flags, maintenance).counter;
      },
      py::arg("flags"), py::arg("maintenance") = std::vector<std::uint8_t>{});
  m.def("latent_dim", &latent_dim, py::arg("latent_fraction"), py::arg("n_features"));
  m.def(
      "validate_window",
      [](double window_hours, int c_thr, double samples_per_hour, double span_hours) {
        return validate_window(from_hours(window_hours), c_thr, samples_per_hour, from_hours(span_hours));
      },
      py::arg("window_hours"), py::arg("c_thr"), py::arg("samples_per_hour") = kSamplesPerHour,
      py::arg("span_hours") = 168.0);
  m.def(
      "synth",
      [](const std::vector<std::string>& configs_json, const fs::path& out) {
        std::vector<SynthConfig> cfgs;
        for (const auto& j : configs_json) cfgs.push_back(synth_config_from_json(j));
        return cmd_synth(cfgs, out).size();
      },
      py::arg("configs_json"), py::arg("out_dir"), "Writes a synthetic dataset; returns the substation count.");
  m.def(
      "validate",
      [](const fs::path& data, bool snap) {
        LoadOptions opt;
        opt.snap_to_grid = snap;
        const auto rep = cmd_validate(data, opt);
        return py::make_tuple(rep.exit_code(), rep.to_text());
      },
      py::arg("data_dir"), py::arg("snap") = false);
  m.def(
      "train",
      [](const fs::path& data, const fs::path& out, const std::string& manufacturer,
         const std::string& variant, std::optional<int> epochs, std::uint64_t seed, int jobs) {
        const auto rc = make_run(data, out, manufacturer, variant, epochs, seed, jobs, std::nullopt);
        BatchSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_train(rc);
        }
        return batch_list(s);
      },
      py::arg("data_dir"), py::arg("out_dir"), py::arg("manufacturer") = "m1",
      py::arg("variant") = "default", py::arg("epochs") = py::none(), py::arg("seed") = 0,
      py::arg("jobs") = 1);
  m.def(
      "detect",
      [](const fs::path& data, const fs::path& out, const std::string& manufacturer,
         const std::string& variant, std::optional<int> c_thr, int jobs) {
        const auto rc = make_run(data, out, manufacturer, variant, std::nullopt, 0, jobs, c_thr);
        DetectSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_detect(rc);
        }
        py::list rows;
        for (const auto& d : s.detections)
          rows.append(py::dict(py::arg("event_id") = d.event_id,
                               py::arg("label") = std::string(to_string(d.label)),
                               py::arg("detected") = d.detected, py::arg("c_max") = d.c_max,
                               py::arg("t_detect") = d.t_detect ? py::object(py::str(format_timestamp(*d.t_detect)))
                                                                : py::object(py::none())));
        return rows;
      },
      py::arg("data_dir"), py::arg("out_dir"), py::arg("manufacturer") = "m1",
      py::arg("variant") = "default", py::arg("c_thr") = py::none(), py::arg("jobs") = 1);
  m.def(
      "tune",
      [](const fs::path& traces, const fs::path& manifest, std::uint64_t seed, const fs::path& out) {
        const auto sel = cmd_tune(traces, manifest, seed, out);
        return py::make_tuple(sel.c_thr, sel.reliability);
      },
      py::arg("traces_dir"), py::arg("manifest"), py::arg("seed") = 0, py::arg("out_dir") = ".");
  m.def(
      "evaluate",
      [](const fs::path& traces, const fs::path& manifest, int c_thr, double window_hours,
         const fs::path& out) {
        const auto res = cmd_evaluate(traces, manifest, c_thr, from_hours(window_hours), out);
        const auto& r = res.report;
        py::dict d;
        d["tp"] = r.counts.tp;
        d["fp"] = r.counts.fp;
        d["fn"] = r.counts.fn;
        d["tn"] = r.counts.tn;
        d["precision"] = r.precision;
        d["recall"] = r.recall;
        d["reliability"] = r.reliability;
        d["accuracy"] = r.accuracy;
        d["earliness"] = r.mean_earliness;
        return d;
      },
      py::arg("traces_dir"), py::arg("manifest"), py::arg("c_thr"), py::arg("window_hours") = 24.0,
      py::arg("out_dir") = ".");
  m.def(
      "attribute",
      [](const fs::path& bundle, const fs::path& data, const std::string& event_id,
         std::optional<std::string> start, std::optional<std::string> end, double alpha,
         std::size_t top_k, const fs::path& out) {
        AttributeRequest req;
        req.bundle_dir = bundle;
        req.data_dir = data;
        req.event_id = event_id;
        if (start) req.start = parse_or_throw(*start);
        if (end) req.end = parse_or_throw(*end);
        req.arcana.alpha = alpha;
        req.top_k = top_k;
        req.out_dir = out;
        const auto rep = cmd_attribute(req);
        py::list ranked;
        for (std::size_t k : rep.ranking.ranked)
          ranked.append(py::make_tuple(rep.ranking.feature_names[k], rep.ranking.importances[k]));
        return ranked;
      },
      py::arg("bundle_dir"), py::arg("data_dir"), py::arg("event_id"), py::arg("start") = py::none(),
      py::arg("end") = py::none(), py::arg("alpha") = 0.8, py::arg("top_k") = 3, py::arg("out_dir") = ".");
}
