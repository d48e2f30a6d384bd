#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "acord/common.hpp"
#include "acord/model.hpp"

namespace acord {

class Trace;

using Bytes = std::vector<std::uint8_t>;

/// Zeroes the floor(fraction * weight_count) smallest-magnitude weights, ranked
/// globally across layers. Biases are never pruned.
DenseModel prune(const DenseModel& model, double fraction);

/// Post-training quantization. 32 bits is the identity. 8 bits maps each weight
/// tensor onto a symmetric grid with step max|w| / 127.
DenseModel quantize(const DenseModel& model, QuantLevel level);
/// As above; for 8 bits also derives per-layer activation grids from `calibration`
/// (input_dim x samples).
DenseModel quantize(const DenseModel& model, QuantLevel level, const Eigen::MatrixXd& calibration);

/// Symmetric per-tensor grid step max|v| / 127 (0 for an all-zero tensor).
double quantization_step(const Eigen::MatrixXd& values);

/// Canonical little-endian checkpoint. 32-bit models store float32 tensors;
/// 8-bit models store int8 codes plus a per-tensor step.
Bytes serialize(const DenseModel& model);
DenseModel deserialize(std::span<const std::uint8_t> bytes);

enum class Codec : std::uint8_t { kDeflate = 1 };

/// Deterministic lossless coding: [codec id:1][raw length:4 LE][deflate stream].
Bytes lossless_code(std::span<const std::uint8_t> bytes);
Bytes lossless_decode(std::span<const std::uint8_t> coded);

/// 8 x coded length of the pruned, quantized, serialized model.
std::int64_t measure_dl_bits(const DenseModel& model, double prune_fraction, QuantLevel level);

/// header_bits + 32 * N * sample_count: the pre-coding uplink size.
std::int64_t uplink_bits(int window, int feature_count, std::int64_t sample_count, std::int64_t header_bits);

enum class PayloadKind : std::uint8_t { kData = 1, kModel = 2 };

struct Payload {
  PayloadKind kind = PayloadKind::kData;
  std::int64_t raw_bits = 0;
  std::int64_t coded_bits = 0;
  Bytes bytes;  // coded
  // MODEL
  double prune_fraction = 0.0;
  QuantLevel quant = QuantLevel::k32;
  // DATA
  int window = 0;
  std::size_t sample_count = 0;
};

/// Uplink block: [first position:4][count:4][N:4] then float32 features, all little-endian.
Bytes encode_samples(const Trace& trace, std::size_t begin, std::size_t end);

struct SampleBlock {
  std::size_t first = 0;
  std::size_t count = 0;
  std::size_t feature_count = 0;
  std::vector<double> features;  // row-major, count x feature_count
};
SampleBlock decode_samples(std::span<const std::uint8_t> bytes);

Payload make_data_payload(const Trace& trace, std::size_t begin, std::size_t end, int window);
Payload make_model_payload(const DenseModel& compressed_model);

/// Straight line bits(x) = slope * x + intercept fitted by least squares.
struct SizeModel {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_max = 0.0;

  double predict(double x) const { return slope * x + intercept; }
};

SizeModel fit_size_model(std::span<const std::pair<double, double>> points);

}  // namespace acord
