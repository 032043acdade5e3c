#include "dhfd/scoring.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "dhfd/errors.hpp"

namespace dhfd {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(ScoreType t) { return t == ScoreType::rmse ? "rmse" : "mahalanobis"; }

std::optional<ScoreType> parse_score_type(std::string_view text) {
  if (text == "rmse") return ScoreType::rmse;
  if (text == "mahalanobis") return ScoreType::mahalanobis;
  return std::nullopt;
}

double rmse_score(const VectorXd& r) {
  return std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
}

double mahalanobis_score(const VectorXd& r, const VectorXd& mean, const MatrixXd& inv) {
  const VectorXd c = r - mean;
  return std::sqrt(std::max(0.0, c.dot(inv * c)));
}

MatrixXd regularized_inverse(const MatrixXd& cov, double* lambda_out) {
  const auto d = cov.rows();
  const double lambda = kCovarianceRidge * cov.trace() / static_cast<double>(d);
  MatrixXd reg = cov;
  reg.diagonal().array() += lambda;
  Eigen::LLT<MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success || !(lambda > 0.0))
    throw NumericError("residual covariance is singular after regularization");
  MatrixXd inv = llt.solve(MatrixXd::Identity(d, d));
  inv = 0.5 * (inv + inv.transpose());
  if (!inv.allFinite()) throw NumericError("non-finite covariance inverse");
  if (lambda_out) *lambda_out = lambda;
  return inv;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

VectorXd residual_scores(const ScoreModel& sm, const MatrixXd& residuals) {
  VectorXd out(residuals.rows());
  if (sm.type == ScoreType::rmse) {
    for (Index i = 0; i < residuals.rows(); ++i) out(i) = rmse_score(residuals.row(i).transpose());
  } else {
    const MatrixXd centered = residuals.rowwise() - sm.re_mean.transpose();
    const MatrixXd projected = centered * sm.covariance_inverse;
    out = (projected.array() * centered.array()).rowwise().sum().max(0.0).sqrt().matrix();
  }
  return out;
}

ScoreModel fit_score_model(const AEModel& model, const MatrixXd& x, const MatrixXd& cond,
                           ScoreType type) {
  if (x.rows() < 100) throw UnusableTrainingData("score model needs at least 100 training rows");
  const MatrixXd residuals = x - reconstruct_batch(model, x, cond);
  ScoreModel sm;
  sm.type = type;
  if (type == ScoreType::mahalanobis) {
    sm.re_mean = residuals.colwise().mean().transpose();
    const MatrixXd centered = residuals.rowwise() - sm.re_mean.transpose();
    const MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
    sm.covariance_inverse = regularized_inverse(cov, &sm.lambda);
  }
  const VectorXd s = residual_scores(sm, residuals);
  sm.threshold = quantile(std::vector<double>(s.data(), s.data() + s.size()), kThresholdQuantile);
  return sm;
}

PointScores score_points(const ScoreModel& sm, const AEModel& model, const MatrixXd& x,
                         const MatrixXd& cond) {
  PointScores out;
  out.scores = residual_scores(sm, x - reconstruct_batch(model, x, cond));
  out.flags.resize(static_cast<std::size_t>(out.scores.size()));
  for (Index i = 0; i < out.scores.size(); ++i)
    out.flags[static_cast<std::size_t>(i)] = out.scores(i) > sm.threshold ? 1 : 0;
  return out;
}

std::optional<Timestamp> CriticalitySeries::first_crossing(int c_thr) const {
  for (std::size_t i = 0; i < counter.size(); ++i) {
    if (counter[i] >= c_thr) {
      if (i < timestamps.size()) return timestamps[i];
      return std::nullopt;
    }
  }
  return std::nullopt;
}

CriticalitySeries run_criticality(const Mask& flags, const Mask& maintenance,
                                  std::span<const Timestamp> timestamps) {
  if (!maintenance.empty() && maintenance.size() != flags.size())
    throw std::invalid_argument("flags and maintenance mask differ in length");
  if (!timestamps.empty() && timestamps.size() != flags.size())
    throw std::invalid_argument("flags and timestamps differ in length");
  CriticalitySeries s;
  s.timestamps.assign(timestamps.begin(), timestamps.end());
  s.maintenance = maintenance.empty() ? Mask(flags.size(), 0) : maintenance;
  s.counter.resize(flags.size());
  int c = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (!s.maintenance[i]) c = flags[i] ? c + 1 : std::max(0, c - 1);
    s.counter[i] = c;
    s.c_max = std::max(s.c_max, c);
  }
  return s;
}

Detection detect_event(const CriticalitySeries& series, int c_thr) {
  if (c_thr < 1) throw std::invalid_argument("C_thr must be at least 1");
  Detection d;
  for (std::size_t i = 0; i < series.counter.size(); ++i) {
    if (series.counter[i] >= c_thr) {
      d.detected = true;
      d.index = i;
      if (i < series.timestamps.size()) d.t_detect = series.timestamps[i];
      break;
    }
  }
  return d;
}

}  // namespace dhfd

#include <fstream>
#include <ostream>

#include "csv_util.hpp"

namespace dhfd {

int EventTrace::c_max() const {
  int m = 0;
  for (int c : criticality) m = std::max(m, c);
  return m;
}

void write_trace(const EventTrace& t, std::ostream& out) {
  out << "timestamp,score,flag,criticality\n";
  for (std::size_t i = 0; i < t.size(); ++i)
    out << format_timestamp(t.timestamps[i]) << ',' << format_value(t.scores[i]) << ','
        << static_cast<int>(t.flags[i]) << ',' << t.criticality[i] << '\n';
}

EventTrace read_trace(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line) || csv::trim(line) != "timestamp,score,flag,criticality")
    throw SchemaError("trace header must be 'timestamp,score,flag,criticality'");
  EventTrace t;
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    ++row;
    auto cells = csv::split(line);
    if (cells.size() != 4) throw ParseError("expected 4 cells", row);
    auto ts = parse_timestamp(cells[0]);
    auto score = csv::parse_double(cells[1]);
    auto flag = csv::parse_double(cells[2]);
    auto crit = csv::parse_double(cells[3]);
    if (!ts || !score || !flag || !crit) throw ParseError("malformed trace row", row);
    t.timestamps.push_back(*ts);
    t.scores.push_back(*score);
    t.flags.push_back(*flag != 0.0 ? 1 : 0);
    t.criticality.push_back(static_cast<int>(*crit));
  }
  return t;
}

EventTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_trace(in);
}

}  // namespace dhfd
