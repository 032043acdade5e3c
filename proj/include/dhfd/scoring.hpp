#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dhfd/autoencoder.hpp"

namespace dhfd {

enum class ScoreType { rmse, mahalanobis };
std::string_view to_string(ScoreType t);
std::optional<ScoreType> parse_score_type(std::string_view text);

inline constexpr double kThresholdQuantile = 0.99;
inline constexpr double kCovarianceRidge = 1e-6;  // times trace(cov) / d

struct ScoreModel {
  ScoreType type = ScoreType::rmse;
  Eigen::VectorXd re_mean;            // mahalanobis only
  Eigen::MatrixXd covariance_inverse;  // mahalanobis only, regularized
  double lambda = 0.0;
  double threshold = 0.0;  // t_AE
};

double rmse_score(const Eigen::VectorXd& residual);
double mahalanobis_score(const Eigen::VectorXd& residual, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& covariance_inverse);

// Inverts cov + lambda * I with lambda = 1e-6 * trace(cov) / d. Throws
// NumericError if the regularized matrix is not positive definite.
Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& covariance, double* lambda_out = nullptr);

// Linear-interpolation empirical quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

// Scores for precomputed residuals r = x - reconstruction (one row per sample).
Eigen::VectorXd residual_scores(const ScoreModel& sm, const Eigen::MatrixXd& residuals);

ScoreModel fit_score_model(const AEModel& model, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& cond, ScoreType type);

struct PointScores {
  Eigen::VectorXd scores;
  Mask flags;  // score > threshold
};

PointScores score_points(const ScoreModel& sm, const AEModel& model, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& cond);

struct DetectionConfig {
  int c_thr = 17;
  double samples_per_hour = kSamplesPerHour;

  Duration detection_delay() const { return from_hours(static_cast<double>(c_thr) / samples_per_hour); }
};

struct CriticalitySeries {
  std::vector<Timestamp> timestamps;
  std::vector<int> counter;
  Mask maintenance;
  int c_max = 0;

  std::optional<Timestamp> first_crossing(int c_thr) const;
};

// C rises by one per flagged sample, falls by one per unflagged sample
// (floored at zero), and holds during maintenance. The counter starts at zero
// before the first sample.
CriticalitySeries run_criticality(const Mask& flags, const Mask& maintenance,
                                  std::span<const Timestamp> timestamps = {});

struct Detection {
  bool detected = false;
  std::optional<Timestamp> t_detect;
  std::optional<std::size_t> index;  // sample index of the first crossing
};

Detection detect_event(const CriticalitySeries& series, int c_thr);

}  // namespace dhfd

namespace dhfd {

// Per-event scoring trace, exported as CSV `timestamp,score,flag,criticality`.
struct EventTrace {
  std::vector<Timestamp> timestamps;
  std::vector<double> scores;
  Mask flags;
  std::vector<int> criticality;

  std::size_t size() const { return timestamps.size(); }
  int c_max() const;
};

void write_trace(const EventTrace& trace, std::ostream& out);
EventTrace read_trace(std::istream& in);
EventTrace load_trace(const std::filesystem::path& path);

}  // namespace dhfd
