// Reference implementations used to check the library. Written with plain
// loops on purpose so they share no code with src/.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "acord/model.hpp"
#include "acord/rng.hpp"

namespace oracle {

inline std::vector<double> naive_forward(const acord::DenseModel& m, std::span<const double> x) {
  std::vector<double> a(x.begin(), x.end());
  const auto& layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weights;
    std::vector<double> z(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double s = layers[l].bias(r);
      for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * a[static_cast<std::size_t>(c)];
      if (l + 1 < layers.size()) s = std::max(s, 0.0);
      z[static_cast<std::size_t>(r)] = s;
    }
    a = std::move(z);
  }
  return a;  // pre-sigmoid for the classifier
}

/// Mean loss over the batch: weighted squared error for the AE, cross-entropy for the classifier.
inline double naive_loss(const acord::DenseModel& m, const acord::TrainBatch& b, double lambda_fault,
                         double lambda_normal) {
  double total = 0.0;
  const auto n = static_cast<std::size_t>(b.inputs.rows());
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = b.inputs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    const auto out = naive_forward(m, x);
    if (m.head() == acord::Head::kAutoencoder) {
      double sq = 0.0;
      for (std::size_t j = 0; j < n; ++j) sq += (x[j] - out[j]) * (x[j] - out[j]);
      total += (b.labels[i] == 1 ? lambda_fault : lambda_normal) * sq / static_cast<double>(n);
    } else {
      const double p = 1.0 / (1.0 + std::exp(-out[0]));
      total += b.labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
  }
  return total / static_cast<double>(b.size());
}

/// ||backprop - central differences|| / max(||backprop||, ||central differences||), over all parameters.
inline double gradient_relative_error(const acord::DenseModel& model, const acord::TrainBatch& batch, double step,
                                      double lambda_fault, double lambda_normal) {
  const auto g = acord::gradient(model, batch, {lambda_fault, lambda_normal});
  acord::DenseModel m = model;
  double diff = 0.0, norm_bp = 0.0, norm_fd = 0.0;
  auto probe = [&](double& p, double analytic) {
    const double saved = p;
    p = saved + step;
    const double up = naive_loss(m, batch, lambda_fault, lambda_normal);
    p = saved - step;
    const double down = naive_loss(m, batch, lambda_fault, lambda_normal);
    p = saved;
    const double fd = (up - down) / (2.0 * step);
    diff += (fd - analytic) * (fd - analytic);
    norm_bp += analytic * analytic;
    norm_fd += fd * fd;
  };
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    auto& layer = m.layers()[l];
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) probe(layer.weights(r, c), g.layers[l].weights(r, c));
      probe(layer.bias(r), g.layers[l].bias(r));
    }
  }
  const double scale = std::max(std::sqrt(norm_bp), std::sqrt(norm_fd));
  return scale > 0.0 ? std::sqrt(diff) / scale : std::sqrt(diff);
}

inline acord::TrainBatch random_batch(std::size_t n, std::size_t count, std::uint64_t seed, double fault_share = 0.3) {
  acord::Rng rng(seed);
  acord::TrainBatch b;
  b.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(count));
  for (Eigen::Index c = 0; c < b.inputs.cols(); ++c) {
    for (Eigen::Index r = 0; r < b.inputs.rows(); ++r) b.inputs(r, c) = rng.uniform();
    b.labels.push_back(rng.uniform() < fault_share ? 1 : 0);
  }
  return b;
}

/// Ordinary least squares via the 2x2 normal equations.
inline std::pair<double, double> normal_equations(const std::vector<std::pair<double, double>>& pts) {
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<long double>(pts.size());
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += static_cast<long double>(x) * x;
    sxy += static_cast<long double>(x) * y;
  }
  const long double det = n * sxx - sx * sx;
  const long double slope = (n * sxy - sx * sy) / det;
  const long double intercept = (sy - slope * sx) / n;
  return {static_cast<double>(slope), static_cast<double>(intercept)};
}

}  // namespace oracle
