#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dhfd/autoencoder.hpp"
#include "dhfd/core_data.hpp"

namespace dhfd {

struct ArcanaConfig {
  double alpha = 0.8;
  int max_iters = 500;
  double step_size = 0.01;
  double convergence_tol = 1e-6;
};

struct BiasResult {
  Eigen::VectorXd bias;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
};

// Loss for a candidate bias b on standardized row x:
//   (1 - alpha) * 0.5 * |x + b - AE(x + b)|^2 + alpha * |b|_1
double arcana_loss(const AEModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& cond,
                   const Eigen::VectorXd& bias, double alpha);

// Starts from the feature-wise reconstruction error AE(x) - x and runs
// gradient descent (subgradient 0 at |b_i| = 0). The first trial step is
// step_size, later ones twice the last accepted step; a trial is halved
// until the loss strictly decreases. The search stops
// when no decrease is found, the relative loss change drops below
// convergence_tol, or max_iters is reached.
BiasResult optimize_bias(const AEModel& model, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& cond, const ArcanaConfig& config = {});

struct ImportanceRanking {
  std::vector<std::string> feature_names;
  std::vector<double> importances;  // same order as feature_names, sums to 1
  std::vector<std::size_t> ranked;  // indices, most important first
  std::size_t top_k = 3;
  bool degenerate = false;  // every bias was zero; importances are uniform

  std::vector<std::string> top_features() const;
};

ImportanceRanking aggregate_importances(std::span<const Eigen::VectorXd> biases,
                                        std::vector<std::string> feature_names,
                                        std::size_t top_k = 3);

struct FeatureSeries {
  std::string feature;
  double importance = 0.0;
  std::vector<Timestamp> timestamps;
  std::vector<double> actual;         // original units
  std::vector<double> reconstructed;  // original units
};

struct AttributionReport {
  Timestamp window_start;
  Timestamp window_end;
  std::size_t samples = 0;
  ImportanceRanking ranking;
  std::vector<FeatureSeries> series;  // top-k, ranked
};

// Attributes the rows of `frame` inside [start, end). Throws RangeError if the
// window holds no scorable rows.
AttributionReport attribution_report(const AEModel& model, const TimeSeriesFrame& frame,
                                     Timestamp start, Timestamp end,
                                     const ArcanaConfig& config = {}, std::size_t top_k = 3);

std::string attribution_to_json(const AttributionReport& report);
void write_feature_series(const FeatureSeries& series, std::ostream& out);

}  // namespace dhfd
