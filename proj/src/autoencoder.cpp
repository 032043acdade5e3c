#include "dhfd/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dhfd/errors.hpp"
#include "dhfd/log.hpp"

namespace dhfd {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "linear"; }

std::optional<Activation> parse_activation(std::string_view text) {
  if (text == "tanh") return Activation::tanh;
  if (text == "linear") return Activation::linear;
  return std::nullopt;
}

AEConfig AEConfig::m1() {
  AEConfig c;
  c.latent_fraction = 0.65;
  c.learning_rate = 4.5e-4;
  c.noise_std = 0.05;
  return c;
}

AEConfig AEConfig::m2() {
  AEConfig c;
  c.latent_fraction = 0.25;
  c.learning_rate = 5.3e-4;
  c.noise_std = 0.15;
  return c;
}

int latent_dim(double latent_fraction, std::size_t n_features) {
  const long r = std::lround(latent_fraction * static_cast<double>(n_features));
  return static_cast<int>(std::max(1L, r));
}

std::size_t AEModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* stack : {&encoder, &decoder})
    for (const auto& l : *stack) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

VectorXd AEModel::parameters() const {
  VectorXd flat(static_cast<Index>(parameter_count()));
  Index pos = 0;
  for (const auto* stack : {&encoder, &decoder}) {
    for (const auto& l : *stack) {
      for (Index r = 0; r < l.weights.rows(); ++r)
        for (Index c = 0; c < l.weights.cols(); ++c) flat(pos++) = l.weights(r, c);
      flat.segment(pos, l.bias.size()) = l.bias;
      pos += l.bias.size();
    }
  }
  return flat;
}

void AEModel::set_parameters(const VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count())
    throw SchemaError("parameter vector length mismatch");
  Index pos = 0;
  for (auto* stack : {&encoder, &decoder}) {
    for (auto& l : *stack) {
      for (Index r = 0; r < l.weights.rows(); ++r)
        for (Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = flat(pos++);
      l.bias = flat.segment(pos, l.bias.size());
      pos += l.bias.size();
    }
  }
}

namespace {

DenseLayer make_layer(Index in, Index out, bool activated, std::mt19937_64& rng) {
  DenseLayer l;
  l.activated = activated;
  l.weights.resize(out, in);
  l.bias = VectorXd::Zero(out);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index r = 0; r < out; ++r)
    for (Index c = 0; c < in; ++c) l.weights(r, c) = dist(rng);
  return l;
}

// Activations of every layer for one batch (rows = samples).
struct ForwardPass {
  std::vector<MatrixXd> enc;  // enc[0] = [x | cond], enc[k] = output of encoder layer k-1
  std::vector<MatrixXd> dec;  // dec[0] = [latent | cond]
  const MatrixXd& output() const { return dec.back(); }
};

MatrixXd apply(const DenseLayer& l, const MatrixXd& in, Activation act) {
  MatrixXd z = in * l.weights.transpose();
  z.rowwise() += l.bias.transpose();
  if (l.activated && act == Activation::tanh) z = z.array().tanh().matrix();
  return z;
}

MatrixXd hstack(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

void check_widths(const AEModel& m, Index x_cols, Index c_cols) {
  if (static_cast<std::size_t>(x_cols) != m.n_features)
    throw SchemaError("input has " + std::to_string(x_cols) + " features, model expects " +
                      std::to_string(m.n_features));
  if (static_cast<std::size_t>(c_cols) != m.n_cond)
    throw SchemaError("conditioning has " + std::to_string(c_cols) + " columns, model expects " +
                      std::to_string(m.n_cond));
}

ForwardPass forward(const AEModel& m, const MatrixXd& x, const MatrixXd& cond) {
  ForwardPass fp;
  fp.enc.reserve(m.encoder.size() + 1);
  fp.enc.push_back(m.n_cond ? hstack(x, cond) : x);
  for (const auto& l : m.encoder) fp.enc.push_back(apply(l, fp.enc.back(), m.activation));
  fp.dec.reserve(m.decoder.size() + 1);
  fp.dec.push_back(m.n_cond ? hstack(fp.enc.back(), cond) : fp.enc.back());
  for (const auto& l : m.decoder) fp.dec.push_back(apply(l, fp.dec.back(), m.activation));
  return fp;
}

struct LayerGrad {
  MatrixXd weights;
  VectorXd bias;
};

struct Gradients {
  std::vector<LayerGrad> encoder;
  std::vector<LayerGrad> decoder;
  MatrixXd input;  // dL/d[x | cond] at the encoder input
};

// Backpropagates one stack. `grad_out` is dL/d(output of the stack); returns
// dL/d(input of the stack). Layer gradients are written only if `out` is set.
MatrixXd backprop_stack(const std::vector<DenseLayer>& layers, const std::vector<MatrixXd>& acts,
                        MatrixXd grad_out, Activation act, std::vector<LayerGrad>* out) {
  if (out) out->resize(layers.size());
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& l = layers[k];
    if (l.activated && act == Activation::tanh)
      grad_out.array() *= 1.0 - acts[k + 1].array().square();
    if (out) {
      (*out)[k].weights = grad_out.transpose() * acts[k];
      (*out)[k].bias = grad_out.colwise().sum().transpose();
    }
    grad_out = grad_out * l.weights;
  }
  return grad_out;
}

Gradients backward(const AEModel& m, const ForwardPass& fp, const MatrixXd& grad_output,
                   bool want_params) {
  Gradients g;
  MatrixXd d_dec_in = backprop_stack(m.decoder, fp.dec, grad_output, m.activation,
                                     want_params ? &g.decoder : nullptr);
  MatrixXd d_latent = d_dec_in.leftCols(static_cast<Index>(m.latent));
  MatrixXd d_enc_in = backprop_stack(m.encoder, fp.enc, d_latent, m.activation,
                                     want_params ? &g.encoder : nullptr);
  if (m.n_cond) d_enc_in.rightCols(static_cast<Index>(m.n_cond)) +=
      d_dec_in.rightCols(static_cast<Index>(m.n_cond));
  g.input = std::move(d_enc_in);
  return g;
}

MatrixXd mse_grad(const MatrixXd& y, const MatrixXd& target) {
  return (2.0 / static_cast<double>(y.size())) * (y - target);
}

VectorXd flatten(const Gradients& g) {
  std::size_t n = 0;
  for (const auto* s : {&g.encoder, &g.decoder})
    for (const auto& l : *s) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  VectorXd flat(static_cast<Index>(n));
  Index pos = 0;
  for (const auto* s : {&g.encoder, &g.decoder}) {
    for (const auto& l : *s) {
      for (Index r = 0; r < l.weights.rows(); ++r)
        for (Index c = 0; c < l.weights.cols(); ++c) flat(pos++) = l.weights(r, c);
      flat.segment(pos, l.bias.size()) = l.bias;
      pos += l.bias.size();
    }
  }
  return flat;
}

// Adam state for one parameter block.
struct Moments {
  MatrixXd mw, vw;
  VectorXd mb, vb;
};

class Adam {
 public:
  Adam(const AEModel& m, double lr) : lr_(lr) {
    for (const auto* s : {&m.encoder, &m.decoder})
      for (const auto& l : *s)
        state_.push_back({MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                          MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                          VectorXd::Zero(l.bias.size()), VectorXd::Zero(l.bias.size())});
  }

  void step(AEModel& m, const Gradients& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    std::size_t k = 0;
    auto update = [&](std::vector<DenseLayer>& layers, const std::vector<LayerGrad>& grads) {
      for (std::size_t i = 0; i < layers.size(); ++i, ++k) {
        auto& s = state_[k];
        s.mw = kBeta1 * s.mw + (1.0 - kBeta1) * grads[i].weights;
        s.vw = kBeta2 * s.vw + (1.0 - kBeta2) * grads[i].weights.cwiseAbs2();
        s.mb = kBeta1 * s.mb + (1.0 - kBeta1) * grads[i].bias;
        s.vb = kBeta2 * s.vb + (1.0 - kBeta2) * grads[i].bias.cwiseAbs2();
        layers[i].weights.array() -=
            lr_ * (s.mw.array() / c1) / ((s.vw.array() / c2).sqrt() + kEps);
        layers[i].bias.array() -= lr_ * (s.mb.array() / c1) / ((s.vb.array() / c2).sqrt() + kEps);
      }
    };
    update(m.encoder, g.encoder);
    update(m.decoder, g.decoder);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  long t_ = 0;
  std::vector<Moments> state_;
};

}  // namespace

AEModel init_model(const AEConfig& config, std::size_t n_features) {
  if (n_features < 1) throw std::invalid_argument("autoencoder needs at least one feature");
  for (int h : config.hidden_units)
    if (h < 1) throw ConfigError("hidden layer widths must be positive");
  if (config.noise_std < 0.0) throw ConfigError("noise_std must be non-negative");

  AEModel m;
  m.n_features = n_features;
  m.n_cond = conditioning_width(config.conditioning);
  m.latent = static_cast<std::size_t>(latent_dim(config.latent_fraction, n_features));
  m.activation = config.activation;
  m.config = config;
  if (m.latent >= n_features)
    warn("latent dimension " + std::to_string(m.latent) + " is not smaller than the " +
         std::to_string(n_features) + " input features");

  std::mt19937_64 rng(config.seed);
  const auto n = static_cast<Index>(n_features);
  const auto c = static_cast<Index>(m.n_cond);
  Index width = n + c;
  for (int h : config.hidden_units) {
    m.encoder.push_back(make_layer(width, h, true, rng));
    width = h;
  }
  m.encoder.push_back(make_layer(width, static_cast<Index>(m.latent), false, rng));
  width = static_cast<Index>(m.latent) + c;
  for (auto it = config.hidden_units.rbegin(); it != config.hidden_units.rend(); ++it) {
    m.decoder.push_back(make_layer(width, *it, true, rng));
    width = *it;
  }
  m.decoder.push_back(make_layer(width, n, false, rng));
  return m;
}

MatrixXd reconstruct_batch(const AEModel& model, const MatrixXd& x, const MatrixXd& cond) {
  check_widths(model, x.cols(), cond.cols());
  if (cond.cols() && cond.rows() != x.rows()) throw SchemaError("conditioning row count mismatch");
  return forward(model, x, cond).output();
}

VectorXd reconstruct(const AEModel& model, const VectorXd& x, const VectorXd& cond) {
  return reconstruct_batch(model, x.transpose(), cond.transpose()).row(0).transpose();
}

double reconstruction_loss(const AEModel& model, const MatrixXd& x, const MatrixXd& cond) {
  return (reconstruct_batch(model, x, cond) - x).squaredNorm() / static_cast<double>(x.size());
}

VectorXd loss_gradient(const AEModel& model, const MatrixXd& x, const MatrixXd& cond) {
  check_widths(model, x.cols(), cond.cols());
  auto fp = forward(model, x, cond);
  return flatten(backward(model, fp, mse_grad(fp.output(), x), true));
}

VectorXd input_gradient(const AEModel& model, const VectorXd& x, const VectorXd& cond,
                        const VectorXd& upstream) {
  const MatrixXd xr = x.transpose();
  const MatrixXd cr = cond.transpose();
  check_widths(model, xr.cols(), cr.cols());
  auto fp = forward(model, xr, cr);
  auto g = backward(model, fp, upstream.transpose(), false);
  return g.input.row(0).head(static_cast<Index>(model.n_features)).transpose();
}

TrainResult train(AEModel model, const MatrixXd& x, const MatrixXd& cond, const AEConfig& config) {
  check_widths(model, x.cols(), cond.cols());
  const Index n = x.rows();
  if (config.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (n < config.batch_size)
    throw UnusableTrainingData("training needs at least batch_size (" +
                               std::to_string(config.batch_size) + ") rows, got " +
                               std::to_string(n));
  const auto n_train = static_cast<Index>(
      std::floor(static_cast<double>(n) * (1.0 - config.validation_fraction)));
  if (n_train < 1 || n_train >= n)
    throw UnusableTrainingData("train/validation split leaves an empty partition");

  const MatrixXd x_val = x.bottomRows(n - n_train);
  const MatrixXd c_val = cond.bottomRows(n - n_train);
  const bool has_cond = cond.cols() > 0;

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Index{0});

  Adam adam(model, config.learning_rate);
  TrainResult result{model, {}};
  auto& report = result.report;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  MatrixXd xb, cb, target;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (Index start = 0; start < n_train; start += config.batch_size) {
      const Index b = std::min<Index>(config.batch_size, n_train - start);
      target.resize(b, x.cols());
      cb.resize(b, cond.cols());
      for (Index i = 0; i < b; ++i) {
        const Index row = order[static_cast<std::size_t>(start + i)];
        target.row(i) = x.row(row);
        if (has_cond) cb.row(i) = cond.row(row);
      }
      xb = target;
      if (config.noise_std > 0.0)
        for (Index c = 0; c < xb.cols(); ++c)
          for (Index r = 0; r < b; ++r) xb(r, c) += config.noise_std * noise(rng);
      auto fp = forward(model, xb, cb);
      const double loss = (fp.output() - target).squaredNorm() / static_cast<double>(target.size());
      if (!std::isfinite(loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch + 1),
                            epoch + 1);
      loss_sum += loss * static_cast<double>(b);
      adam.step(model, backward(model, fp, mse_grad(fp.output(), target), true));
    }
    const double train_mse = loss_sum / static_cast<double>(n_train);
    const double val_mse = reconstruction_loss(model, x_val, c_val);
    if (!std::isfinite(val_mse))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch + 1),
                          epoch + 1);
    report.train_mse.push_back(train_mse);
    report.val_mse.push_back(val_mse);
    if (val_mse < best) {
      best = val_mse;
      report.best_epoch = epoch;
      report.best_val_mse = val_mse;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  return result;
}

double gradient_check(const AEModel& model, const VectorXd& x, const VectorXd& cond, double h) {
  const MatrixXd xr = x.transpose();
  const MatrixXd cr = cond.transpose();
  const VectorXd analytic = loss_gradient(model, xr, cr);
  AEModel probe = model;
  VectorXd params = model.parameters();
  double worst = 0.0;
  for (Index i = 0; i < params.size(); ++i) {
    const double saved = params(i);
    params(i) = saved + h;
    probe.set_parameters(params);
    const double up = reconstruction_loss(probe, xr, cr);
    params(i) = saved - h;
    probe.set_parameters(params);
    const double down = reconstruction_loss(probe, xr, cr);
    params(i) = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  return worst;
}

}  // namespace dhfd
