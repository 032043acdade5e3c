#include <sstream>

#include "doctest.h"
#include "dhfd/errors.hpp"
#include "dhfd/preprocess.hpp"
#include "dhfd/synthgen.hpp"
#include "helpers.hpp"

using namespace dhfd;
using testutil::ts;

namespace {

std::string csv(const TimeSeriesFrame& f) {
  std::ostringstream out;
  write_timeseries(f, out);
  return out.str();
}

SynthConfig with_step_drop() {
  SynthConfig c;
  c.n_days = 70;
  FaultInjection f;
  f.type = FaultType::setpoint_step_drop;
  f.feature = "dhw_setpoint";
  f.start = c.start + std::chrono::days(45);
  f.duration = std::chrono::hours(48);
  f.magnitude = -55;
  c.fault_injections.push_back(f);
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  SynthConfig c;
  c.n_days = 20;
  c.normal_events = 0;
  c.train_days = 14;
  CHECK(csv(generate_signals(c)) == csv(generate_signals(c)));
  auto other = c;
  other.seed = c.seed + 1;
  CHECK(csv(generate_signals(c)) != csv(generate_signals(other)));
}

TEST_CASE("no injections gives only normal events") {
  SynthConfig c;
  auto ds = generate(c);
  CHECK(ds.events.size() == 5);
  for (const auto& e : ds.events) CHECK(e.label == EventLabel::normal);
  CHECK(ds.reports.empty());
  CHECK(ds.disturbances.empty());
  CHECK(ds.frame.rows() == 60 * 144);
}

TEST_CASE("setpoint step drop") {
  auto cfg = with_step_drop();
  auto clean = generate_signals(cfg);
  auto ds = generate(cfg);
  const auto& f = cfg.fault_injections[0];
  const auto j = *ds.frame.feature_index("dhw_setpoint");
  for (std::size_t i = 0; i < clean.rows(); ++i) {
    const auto t = clean.timestamps()[i];
    const bool inside = t >= f.start && t < f.start + f.duration;
    for (std::size_t k = 0; k < clean.cols(); ++k) {
      const double expected = clean.value(i, k) + (inside && k == j ? -55.0 : 0.0);
      REQUIRE(ds.frame.value(i, k) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  REQUIRE(ds.ground_truth.size() == 1);
  CHECK(ds.ground_truth[0].start == f.start);
  CHECK(ds.ground_truth[0].end == f.start + f.duration);
  CHECK(ds.ground_truth[0].feature == "dhw_setpoint");

  const auto anomaly = std::find_if(ds.events.begin(), ds.events.end(),
                                    [](const auto& e) { return e.label == EventLabel::anomaly; });
  REQUIRE(anomaly != ds.events.end());
  CHECK(*anomaly->report_time == f.start + std::chrono::hours(24));
  CHECK(anomaly->test_end == *anomaly->report_time);
  CHECK(anomaly->test_end - anomaly->test_start == kTestWindow);
  REQUIRE(ds.reports.size() == 1);
  CHECK(*ds.reports[0].anomaly_start == f.start);

  SUBCASE("normal windows avoid the disturbed period") {
    for (const auto& e : ds.events) {
      if (e.label != EventLabel::normal) continue;
      CHECK((e.test_end <= f.start - std::chrono::hours(24) ||
             e.test_start >= f.start + f.duration));
    }
  }
}

TEST_CASE("inject") {
  SynthConfig c;
  c.n_days = 3;
  const auto clean = generate_signals(c);
  FaultInjection f;
  f.feature = "primary_flow";
  f.start = c.start + std::chrono::hours(10);
  f.duration = kSampleInterval * 100;

  SUBCASE("zero magnitude leaves the frame unchanged") {
    for (auto type : {FaultType::setpoint_step_drop, FaultType::intermittent_zero_flow,
                      FaultType::storage_temp_decay}) {
      f.type = type;
      f.magnitude = 0;
      CHECK(inject(clean, f, 1) == clean);
    }
  }
  SUBCASE("decay over an empty window leaves the frame unchanged") {
    f.type = FaultType::storage_temp_decay;
    f.magnitude = 5;
    f.duration = Duration{0};
    CHECK(inject(clean, f, 1) == clean);
  }
  SUBCASE("storage decay is linear in time") {
    f.type = FaultType::storage_temp_decay;
    f.feature = "dhw_storage_temp_upper";
    f.magnitude = 8;
    auto out = inject(clean, f, 1);
    const auto j = *clean.feature_index(f.feature);
    const auto i0 = clean.lower_bound(f.start);
    double prev = 0;
    for (std::size_t k = 0; k < 100; ++k) {
      const double drop = clean.value(i0 + k, j) - out.value(i0 + k, j);
      CHECK(drop >= prev - 1e-12);
      CHECK(drop <= 8.0 + 1e-12);
      prev = drop;
    }
    CHECK(prev > 7.5);
    CHECK(out.value(i0 + 100, j) == clean.value(i0 + 100, j));
    f.magnitude = -1;
    CHECK_THROWS_AS(inject(clean, f, 1), ConfigError);
  }
  SUBCASE("intermittent zero flow over 100 samples") {
    f.type = FaultType::intermittent_zero_flow;
    f.magnitude = 0.3;
    const auto j = *clean.feature_index(f.feature);
    const auto i0 = clean.lower_bound(f.start);
    int in_bounds = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto out = inject(clean, f, seed);
      int zeros = 0;
      for (std::size_t k = 0; k < 100; ++k) zeros += out.value(i0 + k, j) == 0.0;
      in_bounds += zeros >= 20 && zeros <= 40;
      if (seed == 0) {
        CHECK(zeros >= 20);
        CHECK(zeros <= 40);
        CHECK(inject(clean, f, seed) == out);
      }
    }
    // P(outside [20, 40]) for Binomial(100, 0.3) is about 3 %.
    CHECK(in_bounds >= 45);
    f.magnitude = 1.5;
    CHECK_THROWS_AS(inject(clean, f, 1), ConfigError);
  }
  SUBCASE("rows outside the window are untouched") {
    f.type = FaultType::setpoint_step_drop;
    f.magnitude = 3;
    auto out = inject(clean, f, 1);
    const auto i0 = clean.lower_bound(f.start), i1 = clean.lower_bound(f.start + f.duration);
    for (std::size_t i = 0; i < clean.rows(); ++i) {
      if (i >= i0 && i < i1) continue;
      for (std::size_t k = 0; k < clean.cols(); ++k) REQUIRE(out.value(i, k) == clean.value(i, k));
    }
  }
  SUBCASE("unknown feature") {
    f.feature = "no_such_sensor";
    f.magnitude = 1;
    CHECK_THROWS_AS(inject(clean, f, 1), SchemaError);
  }
}

TEST_CASE("overlapping injections of one type are rejected") {
  auto cfg = with_step_drop();
  auto second = cfg.fault_injections[0];
  second.start += std::chrono::hours(12);
  cfg.fault_injections.push_back(second);
  CHECK_THROWS_AS(generate(cfg), ConfigError);
}

TEST_CASE("generated normal data keeps every feature") {
  SynthConfig c;
  auto ds = generate(c);
  const auto train = slice(ds.frame, ds.events[0].train_start, ds.events[0].train_end);
  auto mask = build_training_mask(train, ds.disturbances, ds.reports);
  auto state = fit_preprocessor(train, mask.usable, Conditioning::none);
  CHECK(state.kept_features == ds.frame.feature_names());
  CHECK(state.dropped.empty());
}

TEST_CASE("dataset files load back") {
  testutil::TempDir dir("synth");
  auto cfg = with_step_drop();
  auto ds = generate(cfg);
  write_dataset(std::span(&ds, 1), dir.path);
  auto frame = load_timeseries(dir.path / "timeseries" / "S1.csv");
  CHECK(csv(frame) == csv(ds.frame));
  CHECK(load_manifest(dir.path / "manifest.csv").size() == ds.events.size());
  CHECK(load_disturbances(dir.path / "disturbances.csv").size() == 2);
  CHECK(load_reports(dir.path / "reports.csv").size() == 1);
  CHECK(std::filesystem::exists(dir.path / "ground_truth.csv"));
}

TEST_CASE("config JSON round trip") {
  auto cfg = with_step_drop();
  cfg.seed = 99;
  cfg.report_delay = std::chrono::hours(2);
  const auto back = synth_config_from_json(synth_config_to_json(cfg));
  CHECK(back.seed == 99);
  CHECK(back.n_days == 70);
  CHECK(back.report_delay == std::chrono::hours(2));
  REQUIRE(back.fault_injections.size() == 1);
  CHECK(back.fault_injections[0].magnitude == -55);
  CHECK(back.features.size() == cfg.features.size());
  CHECK(csv(generate(back).frame) == csv(generate(cfg).frame));
  CHECK_THROWS_AS(synth_config_from_json("{\"fault_injections\": [{\"type\": \"leak\"}]}"),
                  ConfigError);
  CHECK_THROWS_AS(synth_config_from_json("not json"), ConfigError);
}
