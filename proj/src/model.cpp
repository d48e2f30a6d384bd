#include "acord/model.hpp"

#include <algorithm>
#include <cmath>

#include "acord/dataset.hpp"
#include "acord/rng.hpp"

namespace acord {

namespace {

void check_dims(Head head, const std::vector<int>& dims) {
  if (dims.size() < 2) throw Error("a model needs at least an input and an output layer");
  for (int d : dims) {
    if (d <= 0) throw Error("layer dimensions must be positive");
  }
  if (head == Head::kAutoencoder && dims.front() != dims.back()) {
    throw Error("autoencoder output dimension must equal its input dimension");
  }
  if (head == Head::kClassifier && dims.back() != 1) {
    throw Error("classifier head must have a single output");
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // Z_l
  std::vector<Eigen::MatrixXd> post;  // A_l, post[0] is the input
};

// Training-path forward pass: no activation quantization, caches everything.
ForwardCache forward_cached(const DenseModel& model, const Eigen::MatrixXd& inputs) {
  ForwardCache c;
  const auto& layers = model.layers();
  c.post.push_back(inputs);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weights * c.post.back();
    z.colwise() += layers[l].bias;
    Eigen::MatrixXd a = (l + 1 < layers.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    c.pre.push_back(std::move(z));
    c.post.push_back(std::move(a));
  }
  return c;
}

void check_batch(const DenseModel& model, const TrainBatch& batch) {
  if (batch.size() == 0) throw Error("training batch is empty");
  if (static_cast<std::size_t>(batch.inputs.cols()) != batch.size()) {
    throw Error("batch inputs and labels differ in length");
  }
  if (batch.inputs.rows() != model.input_dim()) throw Error("batch feature dimension mismatch");
}

}  // namespace

DenseModel::DenseModel(Head head, std::vector<int> dims) : head_(head), dims_(std::move(dims)) {
  check_dims(head_, dims_);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    layers_.push_back(DenseLayer{Eigen::MatrixXd::Zero(dims_[l + 1], dims_[l]),
                                 Eigen::VectorXd::Zero(dims_[l + 1])});
  }
}

DenseModel DenseModel::random(Head head, std::vector<int> dims, std::uint64_t seed) {
  DenseModel m(head, std::move(dims));
  Rng rng(seed);
  for (auto& layer : m.layers_) {
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.weights.cols()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = static_cast<float>(scale * rng.normal());
      }
    }
  }
  return m;
}

void DenseModel::set_reference_error(double e_ref) {
  if (!(e_ref > 0.0) || !std::isfinite(e_ref)) throw Error("reference error must be positive and finite");
  reference_error_ = e_ref;
}

std::size_t DenseModel::weight_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size());
  return n;
}

std::size_t DenseModel::parameter_count() const {
  std::size_t n = weight_count();
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.bias.size());
  return n;
}

std::size_t DenseModel::mac_count() const { return weight_count(); }

std::size_t DenseModel::activation_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < dims_.size(); ++l) n += static_cast<std::size_t>(dims_[l]);
  return n;
}

Eigen::MatrixXd trace_block(const Trace& trace, std::size_t begin, std::size_t end) {
  if (begin > end || end > trace.size()) throw Error("trace block out of range");
  const auto n = static_cast<Eigen::Index>(trace.feature_count());
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(end - begin));
  for (std::size_t p = begin; p < end; ++p) {
    auto f = trace.features(p);
    out.col(static_cast<Eigen::Index>(p - begin)) = Eigen::Map<const Eigen::VectorXd>(f.data(), n);
  }
  return out;
}

Eigen::MatrixXd forward_batch(const DenseModel& model, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != model.input_dim()) {
    throw Error("input has " + std::to_string(inputs.rows()) + " features, model expects " +
                std::to_string(model.input_dim()));
  }
  const auto& layers = model.layers();
  const auto& meta = model.compression();
  const bool act_quant = meta.quant == QuantLevel::k8;
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weights * a;
    z.colwise() += layers[l].bias;
    if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
    if (act_quant && l < meta.activation_scales.size() && meta.activation_scales[l] > 0.0) {
      const double s = meta.activation_scales[l];
      z = ((z / s).array().round().cwiseMax(-127.0).cwiseMin(127.0) * s).matrix();
    }
    a = std::move(z);
  }
  if (model.head() == Head::kClassifier) a = a.unaryExpr([](double v) { return sigmoid(v); });
  return a;
}

Eigen::VectorXd forward(const DenseModel& model, std::span<const double> x) {
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return forward_batch(model, in).col(0);
}

Eigen::VectorXd reconstruction_errors(const DenseModel& model, const Eigen::MatrixXd& inputs) {
  if (model.head() != Head::kAutoencoder) throw Error("reconstruction error needs an autoencoder head");
  const Eigen::MatrixXd out = forward_batch(model, inputs);
  return (out - inputs).colwise().squaredNorm().transpose() / static_cast<double>(inputs.rows());
}

Eigen::VectorXd fault_scores(const DenseModel& model, const Eigen::MatrixXd& inputs) {
  if (model.head() == Head::kClassifier) return forward_batch(model, inputs).row(0).transpose();
  if (!model.reference_error()) throw Error("autoencoder has no score calibration");
  const double e_ref = *model.reference_error();
  const Eigen::VectorXd e = reconstruction_errors(model, inputs);
  return e.unaryExpr([e_ref](double v) { return v / (v + e_ref); });
}

double fault_score(const DenseModel& model, std::span<const double> x) {
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return fault_scores(model, in)(0);
}

int classify(const DenseModel& model, std::span<const double> x, double tau) {
  return fault_score(model, x) > tau ? 1 : 0;
}

double ae_loss(std::span<const double> x, std::span<const double> reconstruction, int label,
               const LossWeights& weights) {
  if (x.size() != reconstruction.size() || x.empty()) throw Error("ae_loss dimension mismatch");
  double sq = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - reconstruction[j];
    sq += d * d;
  }
  const double w = label == 1 ? weights.fault : weights.normal;
  return w * sq / static_cast<double>(x.size());
}

double batch_loss(const DenseModel& model, const TrainBatch& batch, const LossWeights& weights) {
  check_batch(model, batch);
  const auto c = forward_cached(model, batch.inputs);
  const Eigen::MatrixXd& out = c.post.back();
  const auto b = static_cast<double>(batch.size());
  double total = 0.0;
  if (model.head() == Head::kAutoencoder) {
    const Eigen::VectorXd err = (out - batch.inputs).colwise().squaredNorm().transpose() /
                                static_cast<double>(batch.inputs.rows());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      total += (batch.labels[i] == 1 ? weights.fault : weights.normal) * err(static_cast<Eigen::Index>(i));
    }
  } else {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double z = out(0, static_cast<Eigen::Index>(i));
      total += softplus(z) - static_cast<double>(batch.labels[i]) * z;
    }
  }
  return total / b;
}

Gradients gradient(const DenseModel& model, const TrainBatch& batch, const LossWeights& weights) {
  check_batch(model, batch);
  const auto c = forward_cached(model, batch.inputs);
  const auto& layers = model.layers();
  const auto b = static_cast<double>(batch.size());
  const Eigen::MatrixXd& out = c.post.back();

  Gradients g;
  g.layers.resize(layers.size());
  Eigen::MatrixXd delta(out.rows(), out.cols());
  double total = 0.0;
  if (model.head() == Head::kAutoencoder) {
    const auto n = static_cast<double>(batch.inputs.rows());
    const Eigen::MatrixXd diff = out - batch.inputs;
    for (Eigen::Index i = 0; i < diff.cols(); ++i) {
      const double w = batch.labels[static_cast<std::size_t>(i)] == 1 ? weights.fault : weights.normal;
      total += w * diff.col(i).squaredNorm() / n;
      delta.col(i) = (2.0 * w / (n * b)) * diff.col(i);
    }
  } else {
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      const double z = out(0, i);
      const auto y = static_cast<double>(batch.labels[static_cast<std::size_t>(i)]);
      total += softplus(z) - y * z;
      delta(0, i) = (sigmoid(z) - y) / b;
    }
  }
  g.loss = total / b;

  for (std::size_t l = layers.size(); l-- > 0;) {
    g.layers[l].weights = delta * c.post[l].transpose();
    g.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = layers[l].weights.transpose() * delta;
    const Eigen::MatrixXd& z = c.pre[l - 1];
    delta = back.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
  }
  return g;
}

int epochs_for_window(int window) {
  if (window < 0) throw Error("context window must be non-negative");
  const int raw = 2000 / (2 * window + 1);
  return std::clamp(raw, 5, 16);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void calibrate_reference_error(DenseModel& model, const TrainBatch& batch, double pct) {
  if (model.head() != Head::kAutoencoder) return;
  check_batch(model, batch);
  const Eigen::VectorXd err = reconstruction_errors(model, batch.inputs);
  std::vector<double> normal;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.labels[i] == 0) normal.push_back(err(static_cast<Eigen::Index>(i)));
  }
  if (normal.empty()) normal.assign(err.data(), err.data() + err.size());
  const double e_ref = percentile(std::move(normal), pct);
  model.set_reference_error(std::max(e_ref, 1e-12));
}

DenseModel train(DenseModel model, const TrainBatch& batch, const TrainOptions& options,
                 std::vector<double>* epoch_losses) {
  if (options.epochs < 1) throw Error("epochs must be at least 1");
  check_batch(model, batch);
  if (options.init_seed) model = DenseModel::random(model.head(), model.dims(), *options.init_seed);
  // The server always trains the uncompressed network.
  model.compression() = CompressionMeta{};

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const Gradients g = gradient(model, batch, options.loss_weights);
    if (!std::isfinite(g.loss)) throw Error("non-finite training loss (learning rate too large?)");
    if (epoch_losses) epoch_losses->push_back(g.loss);
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
      model.layers()[l].weights -= options.learning_rate * g.layers[l].weights;
      model.layers()[l].bias -= options.learning_rate * g.layers[l].bias;
    }
  }

  for (auto& layer : model.layers()) {
    layer.weights = layer.weights.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
    layer.bias = layer.bias.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw Error("training produced non-finite parameters");
    }
  }
  if (model.head() == Head::kAutoencoder) calibrate_reference_error(model, batch, options.calibration_percentile);
  return model;
}

}  // namespace acord
