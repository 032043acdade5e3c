#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dhfd/core_data.hpp"
#include "dhfd/errors.hpp"
#include "helpers.hpp"

using namespace dhfd;
using testutil::ts;

namespace {

TimeSeriesFrame read(const std::string& text, LoadOptions opt = {}) {
  std::istringstream in(text);
  return read_timeseries(in, "S1", opt);
}

const char* kThreeRows =
    "timestamp,a,b\n"
    "2031-01-01T00:00:00,1,2\n"
    "2031-01-01T00:10:00,3,4\n"
    "2031-01-01T00:20:00,5,6\n";

}  // namespace

TEST_CASE("three rows load as a 3x2 frame") {
  auto f = read(kThreeRows);
  CHECK(f.rows() == 3);
  CHECK(f.cols() == 2);
  CHECK(f.value(2, 1) == 6.0);
  CHECK(f.feature_names() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("off-grid timestamp names the row") {
  const std::string text =
      "timestamp,a\n"
      "2031-01-01T00:00:00,1\n"
      "2031-01-01T00:05:00,2\n";
  try {
    read(text);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.row() == 2);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("snap option rounds off-grid timestamps") {
  const std::string text =
      "timestamp,a\n"
      "2031-01-01T00:00:00,1\n"
      "2031-01-01T00:14:00,2\n";
  auto f = read(text, {.snap_to_grid = true});
  CHECK(f.timestamps()[1] == ts("2031-01-01T00:10:00"));
}

TEST_CASE("gaps are preserved") {
  auto f = read("timestamp,a\n2031-01-01T00:00:00,1\n2031-01-01T00:30:00,2\n");
  CHECK(f.rows() == 2);
  CHECK(f.timestamps()[1] - f.timestamps()[0] == std::chrono::minutes(30));
}

TEST_CASE("empty cells are missing") {
  auto f = read("timestamp,a,b\n2031-01-01T00:00:00,,2\n");
  CHECK(is_missing(f.value(0, 0)));
  CHECK(f.value(0, 1) == 2.0);
}

TEST_CASE("malformed input is rejected with row numbers") {
  SUBCASE("bad timestamp") {
    try {
      read("timestamp,a\n2031-01-01T00:00:00,1\nnot-a-time,2\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.row() == 2);
    }
  }
  SUBCASE("bad number") {
    CHECK_THROWS_AS(read("timestamp,a\n2031-01-01T00:00:00,abc\n"), ParseError);
  }
  SUBCASE("duplicate timestamp") {
    CHECK_THROWS_AS(read("timestamp,a\n2031-01-01T00:00:00,1\n2031-01-01T00:00:00,2\n"),
                    ValidationError);
  }
  SUBCASE("non-monotone index") {
    CHECK_THROWS_AS(read("timestamp,a\n2031-01-01T00:10:00,1\n2031-01-01T00:00:00,2\n"),
                    ValidationError);
  }
  SUBCASE("duplicate feature names") {
    CHECK_THROWS_AS(read("timestamp,a,a\n2031-01-01T00:00:00,1,2\n"), ValidationError);
  }
}

TEST_CASE("disturbances") {
  SUBCASE("fault row") {
    std::istringstream in("substation_id,timestamp,kind\nS1,2031-01-02T08:00:00,fault\n");
    auto d = read_disturbances(in);
    REQUIRE(d.size() == 1);
    CHECK(d[0].kind == DisturbanceKind::fault);
    CHECK(d[0].timestamp == ts("2031-01-02T08:00:00"));
  }
  SUBCASE("unknown kind") {
    std::istringstream in("substation_id,timestamp,kind\nS1,2031-01-02T08:00:00,repair\n");
    CHECK_THROWS_AS(read_disturbances(in), ValidationError);
  }
  SUBCASE("sorted per substation") {
    std::istringstream in(
        "substation_id,timestamp,kind\n"
        "S1,2031-01-05T00:00:00,task\n"
        "S2,2031-01-01T00:00:00,fault\n"
        "S1,2031-01-02T00:00:00,fault\n");
    auto d = read_disturbances(in);
    REQUIRE(d.size() == 3);
    CHECK(d[0].substation_id == "S1");
    CHECK(d[0].timestamp == ts("2031-01-02T00:00:00"));
    CHECK(d[1].timestamp == ts("2031-01-05T00:00:00"));
    CHECK(d[2].substation_id == "S2");
  }
}

TEST_CASE("reports") {
  std::istringstream in(
      "substation_id,report_time,problem_category,fault_label,monitoring_potential,anomaly_start,"
      "anomaly_end\n"
      "S1,2031-01-10T00:00:00,heating,valve,3,2031-01-08T00:00:00,2031-01-09T00:00:00\n"
      "S1,2031-01-05T00:00:00,dhw,,,,\n");
  auto r = read_reports(in);
  REQUIRE(r.size() == 2);
  CHECK(r[0].report_time == ts("2031-01-05T00:00:00"));
  CHECK_FALSE(r[0].fault_label);
  CHECK_FALSE(r[0].high_monitoring_potential());
  CHECK(r[1].high_monitoring_potential());
  CHECK(*r[1].anomaly_start == ts("2031-01-08T00:00:00"));

  SUBCASE("monitoring potential class boundary") {
    IncidentReport x;
    x.monitoring_potential = 2.5;
    CHECK(x.high_monitoring_potential());
    x.monitoring_potential = 2.4;
    CHECK_FALSE(x.high_monitoring_potential());
  }
  SUBCASE("rating out of range") {
    std::istringstream bad(
        "substation_id,report_time,problem_category,fault_label,monitoring_potential,anomaly_start,"
        "anomaly_end\nS1,2031-01-10T00:00:00,x,,7,,\n");
    CHECK_THROWS_AS(read_reports(bad), ValidationError);
  }
  SUBCASE("anomaly_start after anomaly_end") {
    std::istringstream bad(
        "substation_id,report_time,problem_category,fault_label,monitoring_potential,anomaly_start,"
        "anomaly_end\nS1,2031-01-10T00:00:00,x,,,2031-01-09T00:00:00,2031-01-08T00:00:00\n");
    CHECK_THROWS_AS(read_reports(bad), ValidationError);
  }
}

TEST_CASE("slice uses half-open intervals") {
  auto f = read(kThreeRows);
  CHECK(slice(f, ts("2031-01-01T00:00:00"), ts("2031-01-02T00:00:00")) == f);
  CHECK(slice(f, ts("2031-02-01T00:00:00"), ts("2031-02-02T00:00:00")).empty());
  auto mid = slice(f, ts("2031-01-01T00:10:00"), ts("2031-01-01T00:20:00"));
  REQUIRE(mid.rows() == 1);
  CHECK(mid.timestamps()[0] == ts("2031-01-01T00:10:00"));
  CHECK_THROWS_AS(slice(f, ts("2031-01-01T00:10:00"), ts("2031-01-01T00:10:00")),
                  std::invalid_argument);
}

TEST_CASE("nested slices equal a direct slice") {
  std::mt19937_64 rng(3);
  std::vector<Timestamp> stamps;
  std::vector<double> col;
  for (int i = 0; i < 200; ++i) {
    if (rng() % 5 == 0) continue;  // leave gaps
    stamps.push_back(ts("2031-01-01T00:00:00") + kSampleInterval * i);
    col.push_back(static_cast<double>(i));
  }
  TimeSeriesFrame f("S1", stamps, {"a"}, {col});
  auto at = [](int i) { return ts("2031-01-01T00:00:00") + kSampleInterval * i; };
  for (int trial = 0; trial < 200; ++trial) {
    int a = static_cast<int>(rng() % 190), b = a + 1 + static_cast<int>(rng() % (200 - a));
    int a2 = a + static_cast<int>(rng() % (b - a)), b2 = a2 + 1 + static_cast<int>(rng() % (b - a2));
    CHECK(slice(slice(f, at(a), at(b)), at(a2), at(b2)) == slice(f, at(a2), at(b2)));
  }
}

TEST_CASE("completeness") {
  const auto start = ts("2031-01-01T00:00:00");
  const auto end = start + std::chrono::days(1);
  std::vector<Timestamp> stamps;
  std::vector<double> control, meter;
  for (int i = 0; i < 144; ++i) {
    stamps.push_back(start + kSampleInterval * i);
    control.push_back(1.0);
    meter.push_back(i % 2 ? kMissing : 2.0);
  }
  SUBCASE("fully populated day") {
    TimeSeriesFrame f("S1", stamps, {"control"}, {control});
    auto c = completeness(f, start, end);
    CHECK(c.expected_samples == 144);
    CHECK(c.completeness == 1.0);
  }
  SUBCASE("half the rows lack the meter feature") {
    TimeSeriesFrame f("S1", stamps, {"control", "meter"}, {control, meter});
    CHECK(completeness(f, start, end).completeness == doctest::Approx(0.5));
    const std::string only_control[] = {"control"};
    CHECK(completeness(f, start, end, only_control).completeness == 1.0);
  }
  SUBCASE("empty frame") {
    TimeSeriesFrame f("S1", {}, {"a"}, {{}});
    CHECK(completeness(f, start, end).completeness == 0.0);
  }
  SUBCASE("adding required features never increases completeness") {
    std::mt19937_64 rng(11);
    std::vector<std::vector<double>> cols(5, std::vector<double>(144));
    for (auto& c : cols)
      for (auto& v : c) v = rng() % 4 == 0 ? kMissing : 1.0;
    TimeSeriesFrame f("S1", stamps, {"a", "b", "c", "d", "e"}, cols);
    std::vector<std::string> req;
    double prev = 1.0;
    for (const auto& name : f.feature_names()) {
      req.push_back(name);
      const double c = completeness(f, start, end, req).completeness;
      CHECK(c <= prev);
      prev = c;
    }
  }
}

TEST_CASE("canonical time series files round-trip byte for byte") {
  const std::string text =
      "timestamp,flow,temp\n"
      "2031-01-01T00:00:00,0.25,61.5\n"
      "2031-01-01T00:10:00,,60\n"
      "2031-01-01T00:40:00,1e-07,-3.125\n";
  auto f = read(text);
  std::ostringstream out;
  write_timeseries(f, out);
  CHECK(out.str() == text);

  testutil::TempDir dir("rt");
  const auto path = dir.path / "S9.csv";
  write_timeseries(f, path);
  auto g = load_timeseries(path);
  CHECK(g.substation_id() == "S9");
  std::ostringstream again;
  write_timeseries(g, again);
  CHECK(again.str() == text);
}

TEST_CASE("event manifest") {
  const std::string text =
      "event_id,substation_id,label,train_start,train_end,test_start,test_end,report_time\n"
      "E1,S1,anomaly,2031-01-01T00:00:00,2031-01-20T00:00:00,2031-01-20T00:00:00,"
      "2031-01-27T00:00:00,2031-01-27T00:00:00\n"
      "E2,S1,normal,2031-01-01T00:00:00,2031-01-20T00:00:00,2031-01-27T00:00:00,"
      "2031-02-03T00:00:00,\n";
  std::istringstream in(text);
  auto events = read_manifest(in);
  REQUIRE(events.size() == 2);
  CHECK(events[0].label == EventLabel::anomaly);
  CHECK_FALSE(events[1].report_time);
  std::ostringstream out;
  write_manifest(events, out);
  CHECK(out.str() == text);

  EventSpec e = events[0];
  SUBCASE("test window must be 7 days") {
    e.test_end = e.test_end + std::chrono::hours(1);
    e.report_time = e.test_end;
    CHECK_THROWS_AS(validate_event(e), ValidationError);
  }
  SUBCASE("training window of at least 14 days") {
    e.train_start = e.train_end - std::chrono::days(13);
    CHECK_THROWS_AS(validate_event(e), ValidationError);
  }
  SUBCASE("anomaly needs a report at test end") {
    e.report_time.reset();
    CHECK_THROWS_AS(validate_event(e), ValidationError);
  }
  SUBCASE("training must precede testing") {
    e.train_end = e.test_start + std::chrono::hours(1);
    CHECK_THROWS_AS(validate_event(e), ValidationError);
  }
  SUBCASE("duplicate ids") {
    std::istringstream dup(text + "E1,S1,normal,2031-01-01T00:00:00,2031-01-20T00:00:00,"
                                  "2031-02-03T00:00:00,2031-02-10T00:00:00,\n");
    CHECK_THROWS_AS(read_manifest(dup), ValidationError);
  }
}

TEST_CASE("timestamp parsing") {
  CHECK(parse_timestamp("2031-01-01 00:10:00") == ts("2031-01-01T00:10:00"));
  CHECK_FALSE(parse_timestamp("2031-02-30T00:00:00"));
  CHECK_FALSE(parse_timestamp("2031-01-01T24:00:00"));
  CHECK(format_timestamp(ts("2032-02-29T23:50:00")) == "2032-02-29T23:50:00");
  CHECK(snap_to_grid(ts("2031-01-01T00:05:00")) == ts("2031-01-01T00:10:00"));
  CHECK(snap_to_grid(ts("2031-01-01T00:04:59")) == ts("2031-01-01T00:00:00"));
}
