#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "acord/common.hpp"

namespace acord {

class Trace;

enum class Head : std::uint8_t {
  kAutoencoder = 0,  // linear output, scored by reconstruction error
  kClassifier = 1,   // single sigmoid output
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.weights == b.weights && a.bias.size() == b.bias.size() && a.bias == b.bias;
  }
};

/// Compression state of a model as shipped downlink.
struct CompressionMeta {
  double prune_fraction = 0.0;
  QuantLevel quant = QuantLevel::k32;
  /// Per-layer weight grid step for 8-bit models.
  std::vector<double> weight_scales;
  /// Per-layer activation grid step for 8-bit inference; 0 disables clamping for that layer.
  std::vector<double> activation_scales;

  friend bool operator==(const CompressionMeta&, const CompressionMeta&) = default;
};

/// Tiny fully connected network: ReLU hidden layers, head-specific output.
class DenseModel {
 public:
  DenseModel() = default;
  /// All-zero parameters with the given layer sizes (input first).
  DenseModel(Head head, std::vector<int> dims);

  /// He-initialized parameters. Values are float32-representable.
  static DenseModel random(Head head, std::vector<int> dims, std::uint64_t seed);

  Head head() const { return head_; }
  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Reference reconstruction error used to map AE errors into (0, 1).
  std::optional<double> reference_error() const { return reference_error_; }
  void set_reference_error(double e_ref);
  void clear_reference_error() { reference_error_.reset(); }

  CompressionMeta& compression() { return compression_; }
  const CompressionMeta& compression() const { return compression_; }

  std::size_t weight_count() const;
  std::size_t parameter_count() const;   // weights + biases
  std::size_t mac_count() const;         // multiply-accumulates per inference
  std::size_t activation_count() const;  // non-input neurons

  friend bool operator==(const DenseModel&, const DenseModel&) = default;

 private:
  Head head_ = Head::kAutoencoder;
  std::vector<int> dims_;
  std::vector<DenseLayer> layers_;
  std::optional<double> reference_error_;
  CompressionMeta compression_;
};

/// Column-per-sample view of a contiguous block of a trace.
Eigen::MatrixXd trace_block(const Trace& trace, std::size_t begin, std::size_t end);

Eigen::VectorXd forward(const DenseModel& model, std::span<const double> x);
/// Batched forward pass; `inputs` is input_dim x batch.
Eigen::MatrixXd forward_batch(const DenseModel& model, const Eigen::MatrixXd& inputs);

/// Mean squared reconstruction error per column.
Eigen::VectorXd reconstruction_errors(const DenseModel& model, const Eigen::MatrixXd& inputs);

double fault_score(const DenseModel& model, std::span<const double> x);
Eigen::VectorXd fault_scores(const DenseModel& model, const Eigen::MatrixXd& inputs);

/// 1 iff fault_score(x) > tau.
int classify(const DenseModel& model, std::span<const double> x, double tau);

struct LossWeights {
  double fault = -0.1;
  double normal = 1.0;
};

/// Label-weighted mean squared reconstruction loss.
double ae_loss(std::span<const double> x, std::span<const double> reconstruction, int label,
               const LossWeights& weights = {});

struct TrainBatch {
  Eigen::MatrixXd inputs;  // input_dim x batch
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct Gradients {
  std::vector<DenseLayer> layers;
  double loss = 0.0;
};

/// Batch-mean loss of the model's head (weighted AE loss or binary cross-entropy).
double batch_loss(const DenseModel& model, const TrainBatch& batch, const LossWeights& weights = {});

/// Exact gradient of batch_loss by backpropagation.
Gradients gradient(const DenseModel& model, const TrainBatch& batch, const LossWeights& weights = {});

struct TrainOptions {
  int epochs = 1;
  double learning_rate = 0.1;
  LossWeights loss_weights{};
  /// When set, parameters are re-initialized from this seed before training.
  std::optional<std::uint64_t> init_seed;
  double calibration_percentile = 95.0;
};

/// Full-batch gradient descent. Afterwards parameters are rounded to float32,
/// compression metadata is reset and the AE reference error is recalibrated.
DenseModel train(DenseModel model, const TrainBatch& batch, const TrainOptions& options,
                 std::vector<double>* epoch_losses = nullptr);

/// Sets the AE reference error to the given percentile of reconstruction
/// errors over the label-0 part of `batch` (all samples if none are normal).
void calibrate_reference_error(DenseModel& model, const TrainBatch& batch, double percentile = 95.0);

/// Training epochs per round for context window W: clamp(floor(2000 / (2W + 1)), 5, 16).
int epochs_for_window(int window);

/// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

}  // namespace acord
