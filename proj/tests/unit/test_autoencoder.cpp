#include <cmath>
#include <random>

#include "doctest.h"
#include "dhfd/autoencoder.hpp"
#include "dhfd/errors.hpp"
#include "dhfd/log.hpp"

using namespace dhfd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

AEConfig small_config(std::vector<int> hidden, double latent_fraction, std::uint64_t seed = 1) {
  AEConfig c;
  c.hidden_units = std::move(hidden);
  c.latent_fraction = latent_fraction;
  c.seed = seed;
  return c;
}

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

struct WarningCapture {
  std::vector<std::string> messages;
  WarningCapture() {
    set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_handler(nullptr); }
};

}  // namespace

TEST_CASE("latent dimension rounding") {
  CHECK(latent_dim(0.65, 20) == 13);
  CHECK(latent_dim(0.25, 3) == 1);
  CHECK(latent_dim(0.25, 2) == 1);   // 0.5 rounds away from zero
  CHECK(latent_dim(0.25, 10) == 3);  // 2.5 rounds away from zero
  CHECK(latent_dim(0.5, 3) == 2);    // 1.5 rounds away from zero
  CHECK(latent_dim(0.01, 5) == 1);   // floor at one
  CHECK(latent_dim(1.0, 7) == 7);
}

TEST_CASE("init_model") {
  SUBCASE("seeded initialisation is bit-identical") {
    auto a = init_model(small_config({8, 4}, 0.5, 7), 6);
    auto b = init_model(small_config({8, 4}, 0.5, 7), 6);
    auto c = init_model(small_config({8, 4}, 0.5, 8), 6);
    CHECK(a.parameters() == b.parameters());
    CHECK(a.parameters() != c.parameters());
  }
  SUBCASE("symmetric stack with conditioning only at the inputs") {
    auto cfg = small_config({16, 8}, 0.65, 1);
    cfg.conditioning = Conditioning::hour_dow;
    auto m = init_model(cfg, 20);
    REQUIRE(m.encoder.size() == 3);
    REQUIRE(m.decoder.size() == 3);
    CHECK(m.encoder[0].weights.cols() == 24);
    CHECK(m.encoder[2].weights.rows() == 13);
    CHECK(m.decoder[0].weights.cols() == 13 + 4);
    CHECK(m.decoder[0].weights.rows() == 8);
    CHECK(m.decoder[1].weights.rows() == 16);
    CHECK(m.decoder[2].weights.rows() == 20);
    CHECK_FALSE(m.encoder[2].activated);
    CHECK_FALSE(m.decoder[2].activated);
    CHECK(static_cast<Eigen::Index>(m.parameter_count()) == m.parameters().size());
  }
  SUBCASE("latent not smaller than the input warns") {
    WarningCapture w;
    auto m = init_model(small_config({4}, 1.0), 3);
    CHECK(m.latent == 3);
    CHECK(w.messages.size() == 1);
  }
  SUBCASE("undercomplete model does not warn") {
    WarningCapture w;
    init_model(small_config({4}, 0.5), 6);
    CHECK(w.messages.empty());
  }
  SUBCASE("negative noise is rejected") {
    auto cfg = small_config({4}, 0.5);
    cfg.noise_std = -0.1;
    CHECK_THROWS_AS(init_model(cfg, 4), ConfigError);
  }
}

TEST_CASE("reconstruct") {
  std::mt19937_64 rng(3);
  auto m = init_model(small_config({5}, 0.5), 4);
  VectorXd x = random_matrix(4, 1, rng).col(0);
  VectorXd none(0);

  SUBCASE("zero final layer gives a zero reconstruction") {
    m.decoder.back().weights.setZero();
    m.decoder.back().bias.setZero();
    CHECK(reconstruct(m, x, none).norm() == 0.0);
  }
  SUBCASE("deterministic and of the input width") {
    auto a = reconstruct(m, x, none);
    CHECK(a.size() == 4);
    CHECK(a == reconstruct(m, x, none));
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(reconstruct(m, VectorXd::Zero(3), none), SchemaError);
    CHECK_THROWS_AS(reconstruct(m, x, VectorXd::Zero(2)), SchemaError);
  }
  SUBCASE("parameter round trip") {
    auto other = init_model(small_config({5}, 0.5, 99), 4);
    other.set_parameters(m.parameters());
    CHECK(reconstruct(other, x, none) == reconstruct(m, x, none));
    CHECK_THROWS_AS(other.set_parameters(VectorXd::Zero(3)), SchemaError);
  }
}

TEST_CASE("conditioning columns are inputs, never targets") {
  std::mt19937_64 rng(4);
  auto cfg = small_config({6}, 0.5);
  cfg.conditioning = Conditioning::hour_dow;
  auto m = init_model(cfg, 5);
  const MatrixXd x = random_matrix(10, 5, rng);
  const MatrixXd c = random_matrix(10, 4, rng);
  const MatrixXd out = reconstruct_batch(m, x, c);
  CHECK(out.cols() == 5);
  CHECK((reconstruct_batch(m, x, c * 0.5) - out).norm() > 0.0);
  // The loss only compares measurement columns with their reconstruction.
  CHECK(reconstruction_loss(m, x, c) ==
        doctest::Approx((out - x).squaredNorm() / static_cast<double>(x.size())).epsilon(1e-14));
}

TEST_CASE("gradient check on a tiny 4-3-2 model") {
  std::mt19937_64 rng(5);
  auto m = init_model(small_config({3}, 0.5), 4);
  REQUIRE(m.latent == 2);
  VectorXd x = random_matrix(4, 1, rng).col(0);
  CHECK(gradient_check(m, x, VectorXd(0)) < 1e-4);

  SUBCASE("with conditioning") {
    auto cfg = small_config({3}, 0.5);
    cfg.conditioning = Conditioning::hour_dow_doy;
    auto mc = init_model(cfg, 4);
    CHECK(gradient_check(mc, x, random_matrix(6, 1, rng).col(0)) < 1e-4);
  }
  SUBCASE("linear activation") {
    auto cfg = small_config({3}, 0.5);
    cfg.activation = Activation::linear;
    CHECK(gradient_check(init_model(cfg, 4), x, VectorXd(0)) < 1e-4);
  }
}

TEST_CASE("gradient vanishes at an exact reconstruction") {
  auto cfg = small_config({}, 1.0);
  cfg.activation = Activation::linear;
  auto m = init_model(cfg, 3);
  m.encoder[0].weights = MatrixXd::Identity(3, 3);
  m.encoder[0].bias.setZero();
  m.decoder[0].weights = MatrixXd::Identity(3, 3);
  m.decoder[0].bias.setZero();
  std::mt19937_64 rng(6);
  const MatrixXd x = random_matrix(7, 3, rng);
  CHECK(reconstruction_loss(m, x, MatrixXd(7, 0)) < 1e-30);
  CHECK(loss_gradient(m, x, MatrixXd(7, 0)).norm() < 1e-10);
}

TEST_CASE("linear autoencoder gradient matches the closed form") {
  std::mt19937_64 rng(7);
  auto cfg = small_config({}, 0.5);
  cfg.activation = Activation::linear;
  auto m = init_model(cfg, 6);
  REQUIRE(m.latent == 3);
  const MatrixXd x = random_matrix(9, 6, rng);
  const MatrixXd& W1 = m.encoder[0].weights;
  const VectorXd& b1 = m.encoder[0].bias;
  const MatrixXd& W2 = m.decoder[0].weights;
  const VectorXd& b2 = m.decoder[0].bias;

  // L = 1/(N d) sum ||W2 (W1 x + b1) + b2 - x||^2
  const double scale = 2.0 / static_cast<double>(x.size());
  MatrixXd gW1 = MatrixXd::Zero(3, 6), gW2 = MatrixXd::Zero(6, 3);
  VectorXd gb1 = VectorXd::Zero(3), gb2 = VectorXd::Zero(6);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const VectorXd xi = x.row(i).transpose();
    const VectorXd h = W1 * xi + b1;
    const VectorXd e = W2 * h + b2 - xi;
    gW2 += scale * e * h.transpose();
    gb2 += scale * e;
    gW1 += scale * (W2.transpose() * e) * xi.transpose();
    gb1 += scale * W2.transpose() * e;
  }
  VectorXd expected(m.parameter_count());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 6; ++c) expected(k++) = gW1(r, c);
  for (Eigen::Index r = 0; r < 3; ++r) expected(k++) = gb1(r);
  for (Eigen::Index r = 0; r < 6; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) expected(k++) = gW2(r, c);
  for (Eigen::Index r = 0; r < 6; ++r) expected(k++) = gb2(r);

  const VectorXd got = loss_gradient(m, x, MatrixXd(9, 0));
  CHECK((got - expected).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("input gradient matches finite differences") {
  std::mt19937_64 rng(8);
  auto cfg = small_config({5, 4}, 0.5);
  cfg.conditioning = Conditioning::hour_dow;
  auto m = init_model(cfg, 6);
  const VectorXd x = random_matrix(6, 1, rng).col(0);
  const VectorXd c = random_matrix(4, 1, rng).col(0);
  const VectorXd u = random_matrix(6, 1, rng).col(0);
  const VectorXd g = input_gradient(m, x, c, u);
  REQUIRE(g.size() == 6);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < 6; ++j) {
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const double num = u.dot(reconstruct(m, xp, c) - reconstruct(m, xm, c)) / (2 * h);
    CHECK(g(j) == doctest::Approx(num).epsilon(1e-6));
  }
}

TEST_CASE("training") {
  SUBCASE("constant signal is reconstructed") {
    auto cfg = small_config({8}, 0.5);
    cfg.batch_size = 32;
    cfg.epochs = 300;
    cfg.learning_rate = 1e-2;
    cfg.noise_std = 0.0;
    auto m = init_model(cfg, 4);
    MatrixXd x(400, 4);
    x.rowwise() = Eigen::RowVector4d(0.5, -1.0, 0.25, 2.0);
    auto r = train(m, x, MatrixXd(400, 0), cfg);
    const VectorXd row = x.row(0).transpose();
    CHECK((reconstruct(r.model, row, VectorXd(0)) - row).squaredNorm() / 4 < 1e-3);
  }
  SUBCASE("rank-k linear data with latent_dim = k") {
    std::mt19937_64 rng(9);
    const MatrixXd basis = random_matrix(2, 6, rng);
    const MatrixXd x = random_matrix(1500, 2, rng) * basis * 0.4;
    auto cfg = small_config({}, 2.0 / 6.0);
    cfg.activation = Activation::linear;
    cfg.noise_std = 0.0;
    cfg.batch_size = 64;
    cfg.epochs = 200;
    cfg.learning_rate = 5e-3;
    auto m = init_model(cfg, 6);
    REQUIRE(m.latent == 2);
    auto r = train(m, x, MatrixXd(1500, 0), cfg);
    CHECK(r.report.best_val_mse < 1e-3);
  }
  SUBCASE("seeded runs are identical and the best epoch is restored") {
    std::mt19937_64 rng(10);
    const MatrixXd x = random_matrix(600, 5, rng);
    auto cfg = small_config({6}, 0.6, 21);
    cfg.batch_size = 50;
    cfg.epochs = 15;
    cfg.early_stop_patience = 3;
    auto a = train(init_model(cfg, 5), x, MatrixXd(600, 0), cfg);
    auto b = train(init_model(cfg, 5), x, MatrixXd(600, 0), cfg);
    CHECK(a.report.train_mse == b.report.train_mse);
    CHECK(a.report.val_mse == b.report.val_mse);
    CHECK(a.model.parameters() == b.model.parameters());

    const auto& val = a.report.val_mse;
    CHECK(a.report.best_val_mse == *std::min_element(val.begin(), val.end()));
    CHECK(val[static_cast<std::size_t>(a.report.best_epoch)] == a.report.best_val_mse);
    const MatrixXd x_val = x.bottomRows(120);
    CHECK(reconstruction_loss(a.model, x_val, MatrixXd(120, 0)) == a.report.best_val_mse);
  }
  SUBCASE("divergence names the epoch") {
    std::mt19937_64 rng(11);
    const MatrixXd x = random_matrix(300, 3, rng) * 1e200;
    auto cfg = small_config({4}, 0.5);
    cfg.batch_size = 100;
    auto m = init_model(cfg, 3);
    try {
      train(m, x, MatrixXd(300, 0), cfg);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(e.epoch() == 1);
    }
  }
  SUBCASE("fewer rows than a batch") {
    auto cfg = small_config({4}, 0.5);
    auto m = init_model(cfg, 3);
    CHECK_THROWS_AS(train(m, MatrixXd::Zero(100, 3), MatrixXd(100, 0), cfg), UnusableTrainingData);
  }
}

TEST_CASE("manufacturer presets") {
  CHECK(AEConfig::m1().latent_fraction == 0.65);
  CHECK(AEConfig::m1().learning_rate == 4.5e-4);
  CHECK(AEConfig::m1().noise_std == 0.05);
  CHECK(AEConfig::m2().latent_fraction == 0.25);
  CHECK(AEConfig::m2().learning_rate == 5.3e-4);
  CHECK(AEConfig::m2().noise_std == 0.15);
  CHECK(AEConfig::m1().batch_size == 256);
  CHECK(AEConfig::m1().hidden_units == std::vector<int>{64, 32});
}
