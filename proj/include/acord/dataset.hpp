#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace acord {

/// One N-dimensional sensor reading with its ground-truth fault state.
struct Sample {
  std::size_t index = 0;
  std::vector<double> features;
  int label = 0;
};

/// Ordered sequence of samples stored row-major. Positions are 0-based offsets
/// into this trace; `index()` is the sampling-period counter of the source.
class Trace {
 public:
  Trace() = default;
  explicit Trace(std::size_t feature_count) : feature_count_(feature_count) {}

  void push_back(std::size_t index, std::span<const double> features, int label);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t feature_count() const { return feature_count_; }

  std::span<const double> features(std::size_t pos) const {
    return {data_.data() + pos * feature_count_, feature_count_};
  }
  std::span<double> features(std::size_t pos) {
    return {data_.data() + pos * feature_count_, feature_count_};
  }
  int label(std::size_t pos) const { return labels_[pos]; }
  std::size_t index(std::size_t pos) const { return indices_[pos]; }
  Sample sample(std::size_t pos) const;

  /// Positions whose label is 1.
  std::vector<std::size_t> fault_event_indices() const;
  std::size_t fault_count() const;

  /// Copy of positions [begin, end).
  Trace slice(std::size_t begin, std::size_t end) const;

  std::span<const double> data() const { return data_; }

  friend bool operator==(const Trace&, const Trace&) = default;

 private:
  std::size_t feature_count_ = 0;
  std::vector<double> data_;
  std::vector<int> labels_;
  std::vector<std::size_t> indices_;
};

struct SplitSpec {
  double train_fraction = 0.1;
  bool faults_to_test = true;
};

/// Position of the first test sample under `spec`. Throws when the train part would be empty.
std::size_t split_boundary(const Trace& trace, const SplitSpec& spec);

/// Contiguous temporal split; the boundary moves earlier so that every fault lands in test.
std::pair<Trace, Trace> split_initial(const Trace& trace, const SplitSpec& spec);

/// Per-feature min-max scaling to [0, 1]; constant features map to 0.
class MinMaxScaler {
 public:
  static MinMaxScaler fit(const Trace& trace);
  void apply(Trace& trace) const;
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

 private:
  std::vector<double> lo_;
  std::vector<double> hi_;
};

/// Column mapping for the pump telemetry CSV.
struct CsvSchema {
  std::string status_column = "machine_status";
  /// Explicit feature columns. When empty, every column whose name starts with
  /// `feature_prefix` is used except those in `exclude_columns`.
  std::vector<std::string> feature_columns;
  std::string feature_prefix = "sensor_";
  std::vector<std::string> exclude_columns = {"sensor_15", "sensor_50"};
  /// Fraction used to locate the train prefix whose statistics drive scaling.
  double train_fraction = 0.1;
};

/// Reads the CSV, imputes unparseable values (previous valid value, or the
/// column median for a leading gap), maps BROKEN to 1 and NORMAL/RECOVERING
/// to 0, and min-max scales features on the train prefix.
Trace load_trace(const std::filesystem::path& path, const CsvSchema& schema = {});

struct SynthConfig {
  std::size_t feature_count = 50;
  std::size_t length = 20000;
  std::size_t fault_events = 7;
  /// Samples over which readings stay correlated; also the width of each fault run.
  std::size_t coherence_length = 30;
  double noise_scale = 0.05;
  std::size_t latent_dim = 4;
  /// Magnitude of the slow operating-point drift across the whole trace.
  double drift = 1.5;
  /// Magnitude of the feature shift during a fault.
  double fault_shift = 3.0;
  /// Unlabelled ramp before each fault, as a fraction of the fault width.
  double precursor_fraction = 0.5;
  /// Faults are placed after this fraction of the trace.
  double fault_start_fraction = 0.15;
};

/// Deterministic synthetic trace: AR(1) latent factors mixed into N features,
/// plus drift, noise and shifted contiguous fault runs.
Trace synth_trace(const SynthConfig& config, std::uint64_t seed);

}  // namespace acord
