#include "acord/compression.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "acord/dataset.hpp"

namespace acord {

namespace {

constexpr std::uint8_t kMagic[4] = {'A', 'C', 'R', 'D'};
constexpr std::uint8_t kFormatVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void i8(int v) { out_.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(v))); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() { return need(1)[0]; }
  std::uint32_t u32() {
    auto p = need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto p = need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  double f64() { return std::bit_cast<double>(u64()); }
  int i8() { return static_cast<std::int8_t>(u8()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> need(std::size_t n) {
    if (pos_ + n > in_.size()) throw Error("truncated byte stream");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

int grid_code(double v, double step) {
  if (step <= 0.0) return 0;
  return static_cast<int>(std::clamp(std::round(v / step), -127.0, 127.0));
}

}  // namespace

DenseModel prune(const DenseModel& model, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("pruning fraction must lie in [0, 1]");
  DenseModel out = model;
  const std::size_t total = out.weight_count();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total)));

  if (count > 0) {
    std::vector<double*> refs;
    refs.reserve(total);
    for (auto& layer : out.layers()) {
      for (Eigen::Index i = 0; i < layer.weights.size(); ++i) refs.push_back(layer.weights.data() + i);
    }
    // Ties resolve by storage order so the selection is deterministic.
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    auto smaller = [&](std::size_t a, std::size_t b) {
      const double ma = std::abs(*refs[a]);
      const double mb = std::abs(*refs[b]);
      return ma < mb || (ma == mb && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count - 1), order.end(), smaller);
    for (std::size_t i = 0; i < count; ++i) *refs[order[i]] = 0.0;
  }
  out.compression().prune_fraction = std::max(out.compression().prune_fraction, fraction);
  return out;
}

double quantization_step(const Eigen::MatrixXd& values) {
  if (values.size() == 0) return 0.0;
  return values.cwiseAbs().maxCoeff() / 127.0;
}

DenseModel quantize(const DenseModel& model, QuantLevel level) {
  // An 8-bit model already sits on its grid.
  if (level == QuantLevel::k32 || model.compression().quant == QuantLevel::k8) return model;
  DenseModel out = model;
  auto& meta = out.compression();
  meta.quant = QuantLevel::k8;
  meta.weight_scales.clear();
  for (auto& layer : out.layers()) {
    const double step = quantization_step(layer.weights);
    layer.weights = layer.weights.unaryExpr([step](double w) { return grid_code(w, step) * step; });
    meta.weight_scales.push_back(step);
  }
  meta.activation_scales.assign(out.layers().size(), 0.0);
  return out;
}

DenseModel quantize(const DenseModel& model, QuantLevel level, const Eigen::MatrixXd& calibration) {
  if (level == QuantLevel::k32 || model.compression().quant == QuantLevel::k8) return model;
  DenseModel out = quantize(model, level);
  if (calibration.cols() == 0) return out;
  if (calibration.rows() != model.input_dim()) throw Error("calibration data dimension mismatch");
  // Activation ranges are observed on the quantized weights, layer by layer.
  Eigen::MatrixXd a = calibration;
  auto& scales = out.compression().activation_scales;
  const auto& layers = out.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weights * a;
    z.colwise() += layers[l].bias;
    if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
    scales[l] = quantization_step(z);
    if (scales[l] > 0.0) {
      const double s = scales[l];
      z = ((z / s).array().round().cwiseMax(-127.0).cwiseMin(127.0) * s).matrix();
    }
    a = std::move(z);
  }
  return out;
}

Bytes serialize(const DenseModel& model) {
  const auto& dims = model.dims();
  if (dims.size() < 2 || model.layers().empty()) throw Error("cannot serialize a model without layers");
  const auto& meta = model.compression();
  Writer w;
  for (auto b : kMagic) w.u8(b);
  w.u8(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(model.head()));
  w.u8(static_cast<std::uint8_t>(quant_bits(meta.quant)));
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) w.u32(static_cast<std::uint32_t>(d));
  w.f64(model.reference_error().value_or(0.0));
  w.f64(meta.prune_fraction);
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& layer = model.layers()[l];
    // Row-major weights.
    if (meta.quant == QuantLevel::k32) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.f32(layer.weights(r, c));
      }
    } else {
      const double step = l < meta.weight_scales.size() ? meta.weight_scales[l] : quantization_step(layer.weights);
      w.f64(step);
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.i8(grid_code(layer.weights(r, c), step));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.f32(layer.bias(r));
    const double act = l < meta.activation_scales.size() ? meta.activation_scales[l] : 0.0;
    if (meta.quant == QuantLevel::k8) w.f64(act);
  }
  return w.take();
}

DenseModel deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (auto b : kMagic) {
    if (r.u8() != b) throw Error("not a model checkpoint (bad magic)");
  }
  if (r.u8() != kFormatVersion) throw Error("unsupported checkpoint version");
  const auto head_tag = r.u8();
  if (head_tag > 1) throw Error("unknown model head tag");
  const QuantLevel quant = quant_level_from_bits(r.u8());
  const std::uint32_t ndims = r.u32();
  if (ndims < 2 || ndims > 64) throw Error("invalid layer count in checkpoint");
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    const std::uint32_t d = r.u32();
    if (d == 0 || d > (1u << 20)) throw Error("invalid layer dimension in checkpoint");
    dims.push_back(static_cast<int>(d));
  }
  DenseModel model(static_cast<Head>(head_tag), dims);
  const double e_ref = r.f64();
  if (e_ref > 0.0) model.set_reference_error(e_ref);
  auto& meta = model.compression();
  meta.prune_fraction = r.f64();
  meta.quant = quant;
  if (quant == QuantLevel::k8) {
    meta.weight_scales.assign(model.layers().size(), 0.0);
    meta.activation_scales.assign(model.layers().size(), 0.0);
  }
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    auto& layer = model.layers()[l];
    if (quant == QuantLevel::k32) {
      for (Eigen::Index row = 0; row < layer.weights.rows(); ++row) {
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(row, c) = r.f32();
      }
    } else {
      const double step = r.f64();
      meta.weight_scales[l] = step;
      for (Eigen::Index row = 0; row < layer.weights.rows(); ++row) {
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(row, c) = r.i8() * step;
      }
    }
    for (Eigen::Index row = 0; row < layer.bias.size(); ++row) layer.bias(row) = r.f32();
    if (quant == QuantLevel::k8) meta.activation_scales[l] = r.f64();
  }
  if (!r.done()) throw Error("trailing bytes after checkpoint");
  return model;
}

Bytes lossless_code(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error("lossless_code needs a non-empty input");
  if (bytes.size() > 0xffffffffu) throw Error("input too large for the codec header");
  uLongf bound = compressBound(static_cast<uLong>(bytes.size()));
  Bytes out(5 + bound);
  out[0] = static_cast<std::uint8_t>(Codec::kDeflate);
  const auto n = static_cast<std::uint32_t>(bytes.size());
  for (int i = 0; i < 4; ++i) out[1 + i] = static_cast<std::uint8_t>(n >> (8 * i));
  const int rc = compress2(out.data() + 5, &bound, bytes.data(), static_cast<uLong>(bytes.size()), 9);
  if (rc != Z_OK) throw Error("deflate failed");
  out.resize(5 + bound);
  return out;
}

Bytes lossless_decode(std::span<const std::uint8_t> coded) {
  if (coded.size() < 6) throw Error("corrupt stream: too short");
  if (coded[0] != static_cast<std::uint8_t>(Codec::kDeflate)) throw Error("corrupt stream: unknown codec id");
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(coded[1 + i]) << (8 * i);
  Bytes out(n);
  uLongf len = n;
  const int rc = uncompress(out.data(), &len, coded.data() + 5, static_cast<uLong>(coded.size() - 5));
  if (rc != Z_OK || len != n) throw Error("corrupt stream: inflate failed");
  return out;
}

std::int64_t measure_dl_bits(const DenseModel& model, double prune_fraction, QuantLevel level) {
  const DenseModel compressed = quantize(prune(model, prune_fraction), level);
  return 8 * static_cast<std::int64_t>(lossless_code(serialize(compressed)).size());
}

std::int64_t uplink_bits(int window, int feature_count, std::int64_t sample_count, std::int64_t header_bits) {
  if (window < 0) throw Error("context window must be non-negative");
  if (feature_count < 0 || sample_count < 0 || header_bits < 0) throw Error("uplink size inputs must be non-negative");
  constexpr std::int64_t kSampleResolutionBits = 32;
  return header_bits + kSampleResolutionBits * feature_count * sample_count;
}

Bytes encode_samples(const Trace& trace, std::size_t begin, std::size_t end) {
  if (begin >= end || end > trace.size()) throw Error("sample block must be a non-empty range of the trace");
  Writer w;
  w.u32(static_cast<std::uint32_t>(begin));
  w.u32(static_cast<std::uint32_t>(end - begin));
  w.u32(static_cast<std::uint32_t>(trace.feature_count()));
  for (std::size_t p = begin; p < end; ++p) {
    for (double v : trace.features(p)) w.f32(v);
  }
  return w.take();
}

SampleBlock decode_samples(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  SampleBlock b;
  b.first = r.u32();
  b.count = r.u32();
  b.feature_count = r.u32();
  if (b.count == 0 || b.feature_count == 0) throw Error("empty sample block");
  if (bytes.size() != 12 + 4 * b.count * b.feature_count) throw Error("sample block length mismatch");
  b.features.resize(b.count * b.feature_count);
  for (auto& v : b.features) v = r.f32();
  return b;
}

Payload make_data_payload(const Trace& trace, std::size_t begin, std::size_t end, int window) {
  Bytes raw = encode_samples(trace, begin, end);
  Payload p;
  p.kind = PayloadKind::kData;
  p.raw_bits = 8 * static_cast<std::int64_t>(raw.size());
  p.bytes = lossless_code(raw);
  p.coded_bits = 8 * static_cast<std::int64_t>(p.bytes.size());
  p.window = window;
  p.sample_count = end - begin;
  return p;
}

Payload make_model_payload(const DenseModel& compressed_model) {
  Bytes raw = serialize(compressed_model);
  Payload p;
  p.kind = PayloadKind::kModel;
  p.raw_bits = 8 * static_cast<std::int64_t>(raw.size());
  p.bytes = lossless_code(raw);
  p.coded_bits = 8 * static_cast<std::int64_t>(p.bytes.size());
  p.prune_fraction = compressed_model.compression().prune_fraction;
  p.quant = compressed_model.compression().quant;
  return p;
}

SizeModel fit_size_model(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw Error("a size model needs at least two points");
  const auto n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (!(sxx > 1e-12 * std::max(1.0, mx * mx))) throw Error("size model needs at least two distinct x values");
  SizeModel m;
  m.slope = sxy / sxx;
  m.intercept = my - m.slope * mx;
  for (const auto& [x, y] : points) m.residual_max = std::max(m.residual_max, std::abs(y - m.predict(x)));
  return m;
}

}  // namespace acord
