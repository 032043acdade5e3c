#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "dhfd/preprocess.hpp"

namespace dhfd {

enum class Activation { tanh, linear };
std::string_view to_string(Activation a);
std::optional<Activation> parse_activation(std::string_view text);

struct AEConfig {
  std::vector<int> hidden_units{64, 32};
  double latent_fraction = 0.65;
  double learning_rate = 4.5e-4;
  double noise_std = 0.05;
  int batch_size = 256;
  int epochs = 200;
  int early_stop_patience = 20;
  std::uint64_t seed = 0;
  Conditioning conditioning = Conditioning::none;
  Activation activation = Activation::tanh;
  double validation_fraction = 0.2;

  // Tuned per-manufacturer presets.
  static AEConfig m1();
  static AEConfig m2();
};

// round(fraction * n_features), halves away from zero, at least 1.
int latent_dim(double latent_fraction, std::size_t n_features);

// y = act(W x + b); weights are (outputs x inputs).
struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
  bool activated = true;
};

// Fully connected autoencoder. The encoder maps [measurements | conditioning]
// through the hidden stack to the latent code; the decoder maps
// [latent | conditioning] through the reversed hidden stack back to the
// measurements. Conditioning columns are never reconstructed.
struct AEModel {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
  std::size_t n_features = 0;
  std::size_t n_cond = 0;
  std::size_t latent = 0;
  Activation activation = Activation::tanh;
  AEConfig config;
  PreprocessorState preprocessor;

  std::size_t parameter_count() const;
  // Flat parameter vector: encoder layers then decoder layers, each layer's
  // weights row-major followed by its bias. This is also the weights.bin order.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);
};

AEModel init_model(const AEConfig& config, std::size_t n_features);

Eigen::VectorXd reconstruct(const AEModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& cond);
Eigen::MatrixXd reconstruct_batch(const AEModel& model, const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& cond);

// Mean squared reconstruction error over all measurement cells.
double reconstruction_loss(const AEModel& model, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& cond);

// Gradient of reconstruction_loss w.r.t. the flat parameter vector.
Eigen::VectorXd loss_gradient(const AEModel& model, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& cond);

// J^T * upstream, where J is the Jacobian of the reconstruction w.r.t. the
// measurement inputs (conditioning held fixed).
Eigen::VectorXd input_gradient(const AEModel& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& cond, const Eigen::VectorXd& upstream);

struct TrainReport {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  int best_epoch = -1;
  double best_val_mse = 0.0;
};

struct TrainResult {
  AEModel model;
  TrainReport report;
};

// Denoising training: targets are the clean rows, Gaussian noise is added to
// measurement inputs only. The first (1 - validation_fraction) of the rows
// train, the rest validate; the best-validation weights are returned.
TrainResult train(AEModel model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& cond,
                  const AEConfig& config);

// Max relative error between backprop and central finite differences
// (step h) over all parameters, with relative error
// |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const AEModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& cond,
                      double h = 1e-5);

}  // namespace dhfd
