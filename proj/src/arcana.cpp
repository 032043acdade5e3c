#include "dhfd/arcana.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "dhfd/errors.hpp"
#include "dhfd/log.hpp"
#include "json.hpp"

namespace dhfd {

using Eigen::Index;
using Eigen::VectorXd;

double arcana_loss(const AEModel& model, const VectorXd& x, const VectorXd& cond,
                   const VectorXd& bias, double alpha) {
  const VectorXd corrected = x + bias;
  const VectorXd r = corrected - reconstruct(model, corrected, cond);
  return (1.0 - alpha) * 0.5 * r.squaredNorm() + alpha * bias.lpNorm<1>();
}

BiasResult optimize_bias(const AEModel& model, const VectorXd& x, const VectorXd& cond,
                         const ArcanaConfig& config) {
  if (config.alpha < 0.0 || config.alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  const double alpha = config.alpha;
  BiasResult res;
  res.bias = reconstruct(model, x, cond) - x;
  double loss = arcana_loss(model, x, cond, res.bias, alpha);
  if (!std::isfinite(loss)) throw NumericError("non-finite ARCANA loss at initialization");
  res.initial_loss = loss;

  double trial = config.step_size;
  for (int it = 0; it < config.max_iters; ++it) {
    const VectorXd corrected = x + res.bias;
    const VectorXd out = reconstruct(model, corrected, cond);
    const VectorXd r = out - corrected;  // d/d(corrected) of 0.5|r|^2 is J^T r - r
    VectorXd grad = (1.0 - alpha) * (input_gradient(model, corrected, cond, r) - r);
    grad += alpha * res.bias.unaryExpr([](double b) { return (b > 0.0) - (b < 0.0) + 0.0; });
    if (grad.squaredNorm() == 0.0) break;

    double step = trial;
    bool accepted = false;
    VectorXd candidate;
    double cand_loss = loss;
    for (int halvings = 0; halvings < 40; ++halvings, step *= 0.5) {
      candidate = res.bias - step * grad;
      cand_loss = arcana_loss(model, x, cond, candidate, alpha);
      if (!std::isfinite(cand_loss))
        throw NumericError("non-finite ARCANA loss at iteration " + std::to_string(it + 1));
      if (cand_loss < loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double rel_change = (loss - cand_loss) / std::max(std::abs(loss), 1e-300);
    res.bias = std::move(candidate);
    loss = cand_loss;
    res.iterations = it + 1;
    trial = 2.0 * step;
    if (rel_change < config.convergence_tol) break;
  }
  res.final_loss = loss;
  return res;
}

std::vector<std::string> ImportanceRanking::top_features() const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < std::min(top_k, ranked.size()); ++k)
    out.push_back(feature_names[ranked[k]]);
  return out;
}

ImportanceRanking aggregate_importances(std::span<const VectorXd> biases,
                                        std::vector<std::string> feature_names,
                                        std::size_t top_k) {
  if (biases.empty()) throw std::invalid_argument("need at least one bias vector");
  const auto d = biases.front().size();
  if (static_cast<std::size_t>(d) != feature_names.size())
    throw SchemaError("bias width differs from the feature list");
  VectorXd mean_abs = VectorXd::Zero(d);
  for (const auto& b : biases) {
    if (b.size() != d) throw SchemaError("bias vectors differ in width");
    mean_abs += b.cwiseAbs();
  }
  mean_abs /= static_cast<double>(biases.size());

  ImportanceRanking r;
  r.top_k = top_k;
  r.feature_names = std::move(feature_names);
  const double total = mean_abs.sum();
  r.importances.resize(static_cast<std::size_t>(d));
  if (total > 0.0) {
    for (Index i = 0; i < d; ++i) r.importances[static_cast<std::size_t>(i)] = mean_abs(i) / total;
  } else {
    r.degenerate = true;
    std::fill(r.importances.begin(), r.importances.end(), 1.0 / static_cast<double>(d));
    warn("all ARCANA biases are zero; importances are uniform");
  }
  r.ranked.resize(static_cast<std::size_t>(d));
  std::iota(r.ranked.begin(), r.ranked.end(), std::size_t{0});
  std::sort(r.ranked.begin(), r.ranked.end(), [&](std::size_t a, std::size_t b) {
    if (r.importances[a] != r.importances[b]) return r.importances[a] > r.importances[b];
    return r.feature_names[a] < r.feature_names[b];
  });
  return r;
}

AttributionReport attribution_report(const AEModel& model, const TimeSeriesFrame& frame,
                                     Timestamp start, Timestamp end, const ArcanaConfig& config,
                                     std::size_t top_k) {
  if (!(start < end)) throw RangeError("attribution window is empty");
  if (frame.empty() || end <= frame.timestamps().front() || start > frame.timestamps().back())
    throw RangeError("attribution window " + format_timestamp(start) + " - " +
                     format_timestamp(end) + " lies outside the frame");
  const auto window = slice(frame, start, end);
  const auto& pre = model.preprocessor;
  const auto tf = transform(window, pre);
  const auto cond = conditioning_matrix(window.timestamps(), pre.conditioning);

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < window.rows(); ++i)
    if (!tf.row_all_missing[i]) rows.push_back(i);
  if (rows.empty()) throw RangeError("attribution window holds no scorable rows");

  std::vector<VectorXd> biases;
  biases.reserve(rows.size());
  for (std::size_t i : rows) {
    const auto r = static_cast<Index>(i);
    biases.push_back(
        optimize_bias(model, tf.values.row(r).transpose(), cond.row(r).transpose(), config).bias);
  }

  AttributionReport rep;
  rep.window_start = start;
  rep.window_end = end;
  rep.samples = rows.size();
  rep.ranking = aggregate_importances(biases, pre.kept_features, top_k);

  const auto x = select_rows(tf.values, rows);
  const auto c = select_rows(cond, rows);
  const auto recon = reconstruct_batch(model, x, c);
  for (std::size_t k = 0; k < std::min(top_k, rep.ranking.ranked.size()); ++k) {
    const std::size_t f = rep.ranking.ranked[k];
    FeatureSeries s;
    s.feature = pre.kept_features[f];
    s.importance = rep.ranking.importances[f];
    const auto col = *window.feature_index(s.feature);
    for (std::size_t n = 0; n < rows.size(); ++n) {
      s.timestamps.push_back(window.timestamps()[rows[n]]);
      s.actual.push_back(window.value(rows[n], col));
      s.reconstructed.push_back(destandardize(pre, f, recon(static_cast<Index>(n), static_cast<Index>(f))));
    }
    rep.series.push_back(std::move(s));
  }
  return rep;
}

std::string attribution_to_json(const AttributionReport& rep) {
  nlohmann::ordered_json j;
  j["window_start"] = format_timestamp(rep.window_start);
  j["window_end"] = format_timestamp(rep.window_end);
  j["samples"] = rep.samples;
  j["degenerate"] = rep.ranking.degenerate;
  j["top_features"] = rep.ranking.top_features();
  auto& ranked = j["ranking"] = nlohmann::ordered_json::array();
  for (std::size_t idx : rep.ranking.ranked)
    ranked.push_back({{"feature", rep.ranking.feature_names[idx]},
                      {"importance", rep.ranking.importances[idx]}});
  return j.dump(2) + "\n";
}

void write_feature_series(const FeatureSeries& s, std::ostream& out) {
  out << "timestamp,actual,reconstructed\n";
  for (std::size_t i = 0; i < s.timestamps.size(); ++i)
    out << format_timestamp(s.timestamps[i]) << ',' << format_value(s.actual[i]) << ','
        << format_value(s.reconstructed[i]) << '\n';
}

}  // namespace dhfd
