#include <doctest.h>

#include <cmath>
#include <vector>

#include "acord/common.hpp"
#include "acord/dataset.hpp"
#include "acord/model.hpp"
#include "oracles.hpp"

using namespace acord;

namespace {

DenseModel identity_ae() {
  DenseModel m(Head::kAutoencoder, {2, 2, 2});
  for (auto& l : m.layers()) l.weights = Eigen::MatrixXd::Identity(2, 2);
  return m;
}

// AE whose reconstruction is the constant vector `c` (zero weights, bias c).
DenseModel constant_ae(std::vector<double> c, double e_ref) {
  const int n = static_cast<int>(c.size());
  DenseModel m(Head::kAutoencoder, {n, 2, n});
  for (int j = 0; j < n; ++j) m.layers().back().bias(j) = c[static_cast<std::size_t>(j)];
  m.set_reference_error(e_ref);
  return m;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("zero classifier outputs one half") {
    const DenseModel m(Head::kClassifier, {3, 4, 1});
    const std::vector<double> x{0.2, 0.4, 0.9};
    CHECK(forward(m, x)(0) == 0.5);
  }

  TEST_CASE("zero autoencoder outputs zeros") {
    const DenseModel m(Head::kAutoencoder, {3, 4, 3});
    const std::vector<double> x{0.2, 0.4, 0.9};
    CHECK(forward(m, x).isZero(0.0));
  }

  TEST_CASE("identity autoencoder reproduces its input") {
    const std::vector<double> x{0.3, 0.7};
    const auto y = forward(identity_ae(), x);
    CHECK(y(0) == 0.3);
    CHECK(y(1) == 0.7);
  }

  TEST_CASE("forward rejects wrong input size and bad shapes") {
    const std::vector<double> x{0.3};
    CHECK_THROWS_AS(forward(identity_ae(), x), Error);
    CHECK_THROWS_AS(DenseModel(Head::kAutoencoder, {3, 2, 4}), Error);
    CHECK_THROWS_AS(DenseModel(Head::kClassifier, {3, 2, 2}), Error);
    CHECK_THROWS_AS(DenseModel(Head::kAutoencoder, {3}), Error);
  }

  TEST_CASE("batched forward matches a plain-loop oracle") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      for (Head h : {Head::kAutoencoder, Head::kClassifier}) {
        const std::vector<int> dims = h == Head::kAutoencoder ? std::vector<int>{6, 5, 3, 5, 6} : std::vector<int>{6, 5, 3, 1};
        const DenseModel m = DenseModel::random(h, dims, seed);
        const auto b = oracle::random_batch(6, 7, seed + 100);
        const Eigen::MatrixXd out = forward_batch(m, b.inputs);
        for (Eigen::Index c = 0; c < b.inputs.cols(); ++c) {
          std::vector<double> x(b.inputs.col(c).data(), b.inputs.col(c).data() + 6);
          auto ref = oracle::naive_forward(m, x);
          if (h == Head::kClassifier) ref[0] = 1.0 / (1.0 + std::exp(-ref[0]));
          for (std::size_t r = 0; r < ref.size(); ++r) CHECK(out(static_cast<Eigen::Index>(r), c) == doctest::Approx(ref[r]).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("fault score of an AE") {
    const std::vector<double> x{1.0, 1.0};
    // e = 0
    CHECK(fault_score(constant_ae({1.0, 1.0}, 0.5), x) == 0.0);
    // e = ((1-0)^2 + (1-0)^2) / 2 = 1 = e_ref
    CHECK(fault_score(constant_ae({0.0, 0.0}, 1.0), x) == 0.5);
    // e = 3 e_ref
    CHECK(fault_score(constant_ae({0.0, 0.0}, 1.0 / 3.0), x) == doctest::Approx(0.75).epsilon(1e-15));
    DenseModel raw(Head::kAutoencoder, {2, 2, 2});
    CHECK_THROWS_AS(fault_score(raw, x), Error);
  }

  TEST_CASE("fault score is monotone in reconstruction error") {
    const DenseModel m = constant_ae({0.0, 0.0, 0.0}, 0.2);
    double prev = -1.0;
    for (int k = 0; k <= 20; ++k) {
      const double v = 0.1 * k;
      const std::vector<double> x{v, v, v};
      const double s = fault_score(m, x);
      CHECK(s >= 0.0);
      CHECK(s < 1.0);
      if (k > 0) CHECK(s > prev);
      prev = s;
    }
  }

  TEST_CASE("classify thresholds") {
    // score 0.9 -> e = 9 e_ref
    const DenseModel m = constant_ae({0.0}, 1.0 / 9.0);
    const std::vector<double> x{1.0};
    CHECK(fault_score(m, x) == doctest::Approx(0.9));
    CHECK(classify(m, x, 0.5) == 1);
    CHECK(classify(m, x, 1.0) == 0);
    CHECK(classify(m, x, 0.0) == 1);
    const std::vector<double> same{0.0};
    CHECK(classify(m, same, 0.0) == 0);  // score 0 is never above 0
  }

  TEST_CASE("detections never increase with tau") {
    const DenseModel m = DenseModel::random(Head::kClassifier, {4, 6, 1}, 9);
    const auto b = oracle::random_batch(4, 300, 10);
    std::size_t prev = b.size() + 1;
    for (int k = 0; k <= 100; ++k) {
      const double tau = 0.01 * k;
      std::size_t count = 0;
      for (Eigen::Index c = 0; c < b.inputs.cols(); ++c) {
        std::vector<double> x(b.inputs.col(c).data(), b.inputs.col(c).data() + 4);
        count += static_cast<std::size_t>(classify(m, x, tau));
      }
      CHECK(count <= prev);
      prev = count;
    }
  }

  TEST_CASE("weighted AE loss") {
    const std::vector<double> x{1.0, 2.0};
    CHECK(ae_loss(x, x, 0) == 0.0);
    CHECK(ae_loss(x, x, 1) == 0.0);
    // ||x - xh||^2 / N = (4 + 0) / 2 = 2
    const std::vector<double> xh{-1.0, 2.0};
    CHECK(ae_loss(x, xh, 0) == doctest::Approx(2.0));
    CHECK(ae_loss(x, xh, 1) == doctest::Approx(-0.2));
    CHECK(ae_loss(x, xh, 0) >= 0.0);
    CHECK(ae_loss(x, xh, 1) <= 0.0);
    const std::vector<double> short_x{1.0};
    CHECK_THROWS_AS(ae_loss(short_x, xh, 0), Error);
  }

  TEST_CASE("batch loss agrees with the oracle") {
    for (Head h : {Head::kAutoencoder, Head::kClassifier}) {
      const std::vector<int> dims = h == Head::kAutoencoder ? std::vector<int>{5, 4, 5} : std::vector<int>{5, 4, 1};
      const DenseModel m = DenseModel::random(h, dims, 4);
      const auto b = oracle::random_batch(5, 9, 5);
      CHECK(batch_loss(m, b) == doctest::Approx(oracle::naive_loss(m, b, -0.1, 1.0)).epsilon(1e-12));
    }
  }

  TEST_CASE("epochs per round") {
    CHECK(epochs_for_window(200) == 5);
    CHECK(epochs_for_window(0) == 16);
    CHECK(epochs_for_window(62) == 16);  // 2000 / 125 = 16
    CHECK(epochs_for_window(66) == 15);  // 2000 / 133 = 15.03
    CHECK(epochs_for_window(99) == 10);
    CHECK_THROWS_AS(epochs_for_window(-1), Error);
  }

  TEST_CASE("zero learning rate leaves weights unchanged") {
    const DenseModel m = DenseModel::random(Head::kAutoencoder, {6, 4, 6}, 3);
    const auto b = oracle::random_batch(6, 10, 4);
    TrainOptions o;
    o.epochs = 3;
    o.learning_rate = 0.0;
    const DenseModel t = train(m, b, o);
    for (std::size_t l = 0; l < m.layers().size(); ++l) CHECK(t.layers()[l] == m.layers()[l]);
  }

  TEST_CASE("training an AE on normal data lowers the loss") {
    SynthConfig cfg;
    cfg.feature_count = 10;
    cfg.length = 200;
    cfg.fault_events = 0;
    Trace t = synth_trace(cfg, 2);
    MinMaxScaler::fit(t).apply(t);
    TrainBatch b{trace_block(t, 0, t.size()), std::vector<int>(t.size(), 0)};
    TrainOptions o;
    o.epochs = 50;
    o.learning_rate = 0.1;
    std::vector<double> losses;
    const DenseModel m = train(DenseModel::random(Head::kAutoencoder, {10, 8, 4, 8, 10}, 1), b, o, &losses);
    REQUIRE(losses.size() == 50);
    CHECK(losses.back() < losses.front());
    REQUIRE(m.reference_error());
    CHECK(*m.reference_error() > 0.0);
  }

  TEST_CASE("reference error is the 95th percentile over normal samples") {
    const DenseModel m = DenseModel::random(Head::kAutoencoder, {4, 3, 4}, 8);
    auto b = oracle::random_batch(4, 40, 9, 0.25);
    DenseModel c = m;
    calibrate_reference_error(c, b, 95.0);
    const Eigen::VectorXd e = reconstruction_errors(m, b.inputs);
    std::vector<double> normal;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (b.labels[i] == 0) normal.push_back(e(static_cast<Eigen::Index>(i)));
    }
    std::sort(normal.begin(), normal.end());
    const double pos = 0.95 * static_cast<double>(normal.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double want = normal[lo] + (pos - static_cast<double>(lo)) * (normal[lo + 1] - normal[lo]);
    CHECK(*c.reference_error() == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("training is deterministic") {
    const auto b = oracle::random_batch(6, 30, 12);
    TrainOptions o;
    o.epochs = 10;
    o.init_seed = 77;
    const DenseModel a = train(DenseModel(Head::kAutoencoder, {6, 5, 6}), b, o);
    const DenseModel c = train(DenseModel(Head::kAutoencoder, {6, 5, 6}), b, o);
    CHECK(a == c);
  }

  TEST_CASE("training errors") {
    const DenseModel m = DenseModel::random(Head::kAutoencoder, {3, 2, 3}, 1);
    TrainOptions o;
    CHECK_THROWS_AS(train(m, TrainBatch{}, o), Error);
    o.epochs = 0;
    CHECK_THROWS_AS(train(m, oracle::random_batch(3, 4, 1), o), Error);
    o.epochs = 50;
    o.learning_rate = 1e12;
    CHECK_THROWS_AS(train(m, oracle::random_batch(3, 4, 1), o), Error);
  }

  TEST_CASE("zero-error AE batch has zero gradient") {
    // Input 0 through an all-zero AE reconstructs exactly.
    const DenseModel m(Head::kAutoencoder, {3, 2, 3});
    TrainBatch b{Eigen::MatrixXd::Zero(3, 4), {0, 0, 1, 0}};
    const auto g = gradient(m, b);
    for (const auto& l : g.layers) {
      CHECK(l.weights.isZero(0.0));
      CHECK(l.bias.isZero(0.0));
    }
  }

  TEST_CASE("fault samples contribute nothing when their weight is zero") {
    const DenseModel m = DenseModel::random(Head::kAutoencoder, {4, 3, 4}, 2);
    auto b = oracle::random_batch(4, 6, 3, 0.0);
    TrainBatch with_fault = b;
    with_fault.labels[2] = 1;
    TrainBatch without = b;
    without.inputs.col(2).setZero();
    without.inputs(0, 2) = 5.0;  // any content
    without.labels[2] = 1;
    const auto g1 = gradient(m, with_fault, {0.0, 1.0});
    const auto g2 = gradient(m, without, {0.0, 1.0});
    for (std::size_t l = 0; l < g1.layers.size(); ++l) {
      CHECK((g1.layers[l].weights - g2.layers[l].weights).norm() == doctest::Approx(0.0));
      CHECK((g1.layers[l].bias - g2.layers[l].bias).norm() == doctest::Approx(0.0));
    }
  }

  TEST_CASE("backprop matches central differences on small models") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const DenseModel ae = DenseModel::random(Head::kAutoencoder, {5, 4, 2, 4, 5}, seed);
      CHECK(oracle::gradient_relative_error(ae, oracle::random_batch(5, 8, seed), 1e-5, -0.1, 1.0) <= 1e-4);
      const DenseModel mlp = DenseModel::random(Head::kClassifier, {5, 4, 3, 1}, seed);
      CHECK(oracle::gradient_relative_error(mlp, oracle::random_batch(5, 8, seed), 1e-5, -0.1, 1.0) <= 1e-4);
    }
  }

  TEST_CASE("parameter, MAC and activation counts") {
    const DenseModel m(Head::kAutoencoder, {50, 64, 16, 64, 50});
    CHECK(m.weight_count() == 50 * 64 + 64 * 16 + 16 * 64 + 64 * 50);
    CHECK(m.parameter_count() == m.weight_count() + 64 + 16 + 64 + 50);
    CHECK(m.parameter_count() == 8642);
    CHECK(m.mac_count() == m.weight_count());
    CHECK(m.activation_count() == 64 + 16 + 64 + 50);
  }

  TEST_CASE("random initialization is float32-representable and seeded") {
    const DenseModel a = DenseModel::random(Head::kClassifier, {7, 5, 1}, 3);
    CHECK(a == DenseModel::random(Head::kClassifier, {7, 5, 1}, 3));
    CHECK_FALSE(a == DenseModel::random(Head::kClassifier, {7, 5, 1}, 4));
    for (const auto& l : a.layers()) {
      for (Eigen::Index i = 0; i < l.weights.size(); ++i) {
        CHECK(static_cast<double>(static_cast<float>(l.weights(i))) == l.weights(i));
      }
    }
  }

  TEST_CASE("percentile interpolates") {
    CHECK(percentile({1, 2, 3, 4}, 50) == 2.5);
    CHECK(percentile({5}, 95) == 5);
    CHECK(percentile({0, 10}, 95) == doctest::Approx(9.5));
    CHECK_THROWS_AS(percentile({}, 50), Error);
  }
}
