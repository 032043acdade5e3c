#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "doctest.h"
#include "dhfd/errors.hpp"
#include "dhfd/scoring.hpp"
#include "helpers.hpp"

using namespace dhfd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using testutil::ts;

namespace {

// Per-sample state machine written directly from the counter rules.
std::vector<int> brute_force_counter(const Mask& flags, const Mask& maint) {
  std::vector<int> out;
  int c = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (maint[i] == 1) {
      // hold
    } else if (flags[i] == 1) {
      c = c + 1;
    } else if (c > 0) {
      c = c - 1;
    }
    out.push_back(c);
  }
  return out;
}

// Type-7 sample quantile: h = (n - 1) q, interpolate between floor(h) and floor(h) + 1.
double quantile_oracle(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("score functions") {
  CHECK(rmse_score(VectorXd::Ones(4)) == 1.0);
  VectorXd r(2);
  r << 3, 4;
  CHECK(mahalanobis_score(r, VectorXd::Zero(2), MatrixXd::Identity(2, 2)) == doctest::Approx(5.0));
  SUBCASE("identity covariance gives the centred Euclidean norm") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (int t = 0; t < 100; ++t) {
      VectorXd x(7), m(7);
      for (int i = 0; i < 7; ++i) x(i) = 10 * g(rng), m(i) = g(rng);
      CHECK(std::abs(mahalanobis_score(x, m, MatrixXd::Identity(7, 7)) - (x - m).norm()) < 1e-12);
    }
  }
}

TEST_CASE("regularised inverse") {
  SUBCASE("rank-deficient covariance") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    MatrixXd b(3, 10);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    MatrixXd z(500, 3);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
    const MatrixXd re = z * b;
    const MatrixXd centred = re.rowwise() - re.colwise().mean();
    const MatrixXd cov = centred.transpose() * centred / 500.0;
    double lambda = 0;
    const MatrixXd inv = regularized_inverse(cov, &lambda);
    CHECK(lambda == doctest::Approx(1e-6 * cov.trace() / 10));
    const MatrixXd reg = cov + lambda * MatrixXd::Identity(10, 10);
    CHECK((reg * inv - MatrixXd::Identity(10, 10)).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((inv - inv.transpose()).lpNorm<Eigen::Infinity>() < 1e-6 * inv.lpNorm<Eigen::Infinity>());
  }
  SUBCASE("zero covariance cannot be regularised") {
    CHECK_THROWS_AS(regularized_inverse(MatrixXd::Zero(3, 3)), NumericError);
  }
  SUBCASE("indefinite matrix") {
    MatrixXd m(2, 2);
    m << 1, 0, 0, -0.5;
    CHECK_THROWS_AS(regularized_inverse(m), NumericError);
  }
}

TEST_CASE("quantile uses linear interpolation") {
  CHECK(quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
  CHECK(quantile({5, 1, 4, 2, 3}, 0.25) == 2.0);
  CHECK(quantile({0, 10}, 0.99) == doctest::Approx(9.9));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(1 + rng() % 300);
    for (auto& x : v) x = u(rng);
    const double q = static_cast<double>(rng() % 1001) / 1000.0;
    CHECK(quantile(v, q) == doctest::Approx(quantile_oracle(v, q)).epsilon(1e-12));
  }
}

TEST_CASE("99th percentile threshold flags about 1% of training rows") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    MatrixXd re(1000, 5);
    for (Eigen::Index i = 0; i < re.size(); ++i) re.data()[i] = g(rng);
    ScoreModel sm;
    sm.type = ScoreType::rmse;
    const VectorXd s = residual_scores(sm, re);
    sm.threshold = quantile(std::vector<double>(s.data(), s.data() + s.size()), kThresholdQuantile);
    const auto above = (s.array() > sm.threshold).count();
    CHECK(above >= 5);
    CHECK(above <= 15);
  }
}

TEST_CASE("fit_score_model and score_points") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  const int n = 2000;
  MatrixXd latent(n, 2), mix(2, 4);
  for (Eigen::Index i = 0; i < latent.size(); ++i) latent.data()[i] = g(rng);
  mix << 1, 0.5, -0.3, 0.8, 0.2, -1, 0.6, 0.4;
  MatrixXd x = latent * mix;
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += 0.05 * g(rng);

  AEConfig cfg;
  cfg.hidden_units = {8};
  cfg.latent_fraction = 0.5;
  cfg.batch_size = 64;
  cfg.epochs = 40;
  cfg.learning_rate = 5e-3;
  cfg.noise_std = 0.0;
  auto trained = train(init_model(cfg, 4), x, MatrixXd(n, 0), cfg).model;

  for (auto type : {ScoreType::rmse, ScoreType::mahalanobis}) {
    CAPTURE(to_string(type));
    const auto sm = fit_score_model(trained, x, MatrixXd(n, 0), type);
    const auto pts = score_points(sm, trained, x, MatrixXd(n, 0));
    const auto flagged = std::count(pts.flags.begin(), pts.flags.end(), 1);
    CHECK(flagged >= 10);
    CHECK(flagged <= 30);

    MatrixXd shifted = x.topRows(50);
    shifted.col(0).array() += 10.0;
    const auto hit = score_points(sm, trained, shifted, MatrixXd(50, 0));
    CHECK(std::count(hit.flags.begin(), hit.flags.end(), 1) == 50);

    ScoreModel at = sm;
    at.threshold = pts.scores(0);
    CHECK(score_points(at, trained, x.topRows(1), MatrixXd(1, 0)).flags[0] == 0);
  }
  SUBCASE("Mahalanobis model state") {
    const auto sm = fit_score_model(trained, x, MatrixXd(n, 0), ScoreType::mahalanobis);
    CHECK(sm.re_mean.size() == 4);
    CHECK(sm.covariance_inverse.rows() == 4);
    CHECK(sm.lambda > 0.0);
    Eigen::LLT<MatrixXd> llt(sm.covariance_inverse);
    CHECK(llt.info() == Eigen::Success);
  }
  SUBCASE("too few rows") {
    CHECK_THROWS(fit_score_model(trained, x.topRows(99), MatrixXd(99, 0), ScoreType::rmse));
  }
}

TEST_CASE("criticality counter examples") {
  auto c = run_criticality({1, 1, 1, 0, 1}, {});
  CHECK(c.counter == std::vector<int>{1, 2, 3, 2, 3});
  CHECK(c.c_max == 3);
  CHECK(run_criticality({0, 0, 0}, {}).counter == std::vector<int>{0, 0, 0});
  CHECK(run_criticality({1, 1, 1}, {0, 1, 0}).counter == std::vector<int>{1, 1, 2});
  CHECK_THROWS_AS(run_criticality({1, 1}, {0}), std::invalid_argument);
}

TEST_CASE("criticality matches the brute-force state machine") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 2016;
    const double p_flag = static_cast<double>(rng() % 100) / 100.0;
    const double p_maint = static_cast<double>(rng() % 20) / 100.0;
    std::bernoulli_distribution bf(p_flag), bm(p_maint);
    Mask flags(n), maint(n);
    for (std::size_t i = 0; i < n; ++i) flags[i] = bf(rng), maint[i] = bm(rng);
    const auto s = run_criticality(flags, maint);
    REQUIRE(s.counter == brute_force_counter(flags, maint));
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(s.counter[i] >= 0);
      const int prev = i ? s.counter[i - 1] : 0;
      REQUIRE(std::abs(s.counter[i] - prev) <= 1);
      if (maint[i]) REQUIRE(s.counter[i] == prev);
    }
    REQUIRE(s.c_max == *std::max_element(s.counter.begin(), s.counter.end()));
  }
}

TEST_CASE("detect_event") {
  std::vector<Timestamp> stamps;
  for (int i = 0; i < 5; ++i) stamps.push_back(ts("2031-01-01T00:00:00") + kSampleInterval * i);
  const auto s = run_criticality({1, 1, 1, 0, 1}, {}, stamps);
  auto d = detect_event(s, 3);
  CHECK(d.detected);
  CHECK(*d.t_detect == stamps[2]);
  CHECK(*d.index == 2);
  auto none = detect_event(run_criticality({1, 1, 0, 0, 1}, {}, stamps), 3);
  CHECK_FALSE(none.detected);
  CHECK_FALSE(none.t_detect);
  CHECK_THROWS_AS(detect_event(s, 0), std::invalid_argument);

  SUBCASE("C_thr 36 at 6 samples per hour needs six hours of flags") {
    const DetectionConfig cfg{36, 6.0};
    CHECK(cfg.detection_delay() == std::chrono::hours(6));
    std::vector<Timestamp> day;
    for (int i = 0; i < 144; ++i) day.push_back(ts("2031-01-01T00:00:00") + kSampleInterval * i);
    const auto all = run_criticality(Mask(144, 1), {}, day);
    const auto det = detect_event(all, cfg.c_thr);
    REQUIRE(det.detected);
    // The crossing sample is the 36th, i.e. six hours of samples have elapsed.
    CHECK(static_cast<double>(*det.index + 1) / cfg.samples_per_hour == 6.0);
    CHECK(*det.t_detect + kSampleInterval - day[0] == cfg.detection_delay());
  }
}

TEST_CASE("detection is monotone in C_thr") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 1000;
    std::vector<Timestamp> stamps;
    Mask flags(n);
    std::bernoulli_distribution b(0.55);
    for (std::size_t i = 0; i < n; ++i) {
      flags[i] = b(rng);
      stamps.push_back(ts("2031-01-01T00:00:00") + kSampleInterval * static_cast<long>(i));
    }
    const auto s = run_criticality(flags, {}, stamps);
    std::optional<Timestamp> prev;
    for (int k = 100; k >= 1; --k) {
      const auto d = detect_event(s, k);
      if (prev) {
        REQUIRE(d.detected);
        REQUIRE(*d.t_detect <= *prev);
      }
      if (d.detected) prev = d.t_detect;
    }
  }
}

TEST_CASE("trace CSV round trip") {
  EventTrace t;
  for (int i = 0; i < 4; ++i) {
    t.timestamps.push_back(ts("2031-01-01T00:00:00") + kSampleInterval * i);
    t.scores.push_back(0.1 * i + 1e-17);
    t.flags.push_back(static_cast<std::uint8_t>(i % 2));
    t.criticality.push_back(i % 2);
  }
  std::ostringstream out;
  write_trace(t, out);
  CHECK(out.str().rfind("timestamp,score,flag,criticality\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = read_trace(in);
  CHECK(back.timestamps == t.timestamps);
  CHECK(back.scores == t.scores);
  CHECK(back.flags == t.flags);
  CHECK(back.criticality == t.criticality);
  CHECK(back.c_max() == 1);
}
