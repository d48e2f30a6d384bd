#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "acord/dataset.hpp"
#include "acord/energy.hpp"
#include "acord/model.hpp"
#include "acord/planner.hpp"
#include "acord/runtime.hpp"

namespace acord {

enum class SweepAxis { kEnergy, kBandwidth };

SweepAxis sweep_axis_from_string(const std::string& name);
std::string to_string(SweepAxis axis);

/// Everything a command needs. Built from defaults, then a key = value file, then flags.
struct ExperimentConfig {
  // data
  std::string dataset = "synth";  // CSV path or "synth"
  SynthConfig synth;
  CsvSchema schema;

  // sweep axes and single-run point
  std::vector<Policy> policies = {Policy::kAcord, Policy::kHawk, Policy::kPeriodic};
  std::vector<double> energy_thresholds = {10, 20, 30, 40, 50, 60};
  std::vector<double> bandwidths = {0.1e6, 0.25e6, 0.5e6, 1e6, 2e6};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  Policy policy = Policy::kAcord;
  double energy_threshold = 60.0;
  double bandwidth = 1e6;
  std::vector<double> bandwidth_schedule;
  std::uint64_t seed = 1;

  // device and link
  EnergyParams energy;
  std::int64_t header_bits = 512;
  double sample_period_s = 1.0;
  double initial_rate_bps = 0.0;

  // planner
  int max_window = 200;
  int window_step = 25;
  double prune_step = 0.1;
  double grid_step = 0.1;
  std::optional<double> pruning_threshold;
  std::optional<double> tau;  // unset: calibrated from the ROC dry run
  double hawk_tau = 0.5;
  int baseline_window = 200;

  // models and training
  Head detector = Head::kAutoencoder;
  std::vector<int> ae_hidden = {64, 16, 64};
  std::vector<int> mlp_hidden = {64, 16};
  int initial_epochs = 300;
  double initial_learning_rate = 0.1;
  double learning_rate = 0.05;
  LossWeights loss_weights{};
  double calibration_percentile = 95.0;
  std::size_t label_delay = 0;

  // harness
  int workers = 0;  // 0: hardware concurrency
  std::string out = "out";
  std::string socket;  // HOST:PORT for the loopback socket transport

  /// Recognized keys, in a stable order.
  static const std::vector<std::string>& keys();
  /// Sets one key from its text form. Unknown keys and bad values throw, naming the key.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  std::vector<int> dims(Head head, std::size_t feature_count) const;
  RuntimeConfig runtime(double energy_threshold_j, double bandwidth_bps, double tau_value) const;
};

/// Applies `key = value` lines ('#' starts a comment).
void apply_config_text(ExperimentConfig& config, std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

struct PreparedData {
  Trace train;
  Trace test;
  /// Held-out data for threshold calibration.
  Trace validation;
};

/// Loads or synthesizes the trace, splits it and scales every part with train statistics.
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

/// Fresh detector trained on the (all-normal) train split.
DenseModel train_initial_model(const ExperimentConfig& config, Head head, const Trace& train, std::uint64_t seed);

/// Per-seed state shared by every run of that seed.
struct SeedContext {
  std::uint64_t seed = 0;
  PreparedData data;
  InitialState initial;
  SizeCalibration sizes;
};

SeedContext make_seed_context(const ExperimentConfig& config, Head head, std::uint64_t seed);

RunResult run_with_context(const ExperimentConfig& config, const SeedContext& ctx, Policy policy,
                           double energy_threshold_j, double bandwidth_bps, double tau_value,
                           Transport* transport = nullptr);

struct RocResult {
  std::string detector;
  ThresholdChoice choice;
  double auc = 0.0;
  /// Set when the validation runs saw no fault; the default threshold is kept.
  bool no_positives = false;
};

/// One unconstrained fixed-plan run per grid threshold on the validation data.
RocResult roc_dry_run(const ExperimentConfig& config, const SeedContext& ctx);

/// The configured tau, or the ROC-optimal one computed on `ctx`.
double resolve_tau(const ExperimentConfig& config, const SeedContext& ctx);

struct SweepRow {
  Policy policy = Policy::kAcord;
  double energy_threshold_j = 0.0;
  double bandwidth_bps = 0.0;
  std::uint64_t seed = 0;
  double recall = 0.0;
  double e_total_j = 0.0;
  int rounds = 0;
  std::string status = "ok";
};

struct MedianRow {
  Policy policy = Policy::kAcord;
  double energy_threshold_j = 0.0;
  double bandwidth_bps = 0.0;
  std::size_t runs = 0;
  double recall = 0.0;
  double e_total_j = 0.0;
};

/// Every (policy, axis value, seed) run, in that key order.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, SweepAxis axis, double tau_value);
std::vector<MedianRow> sweep_medians(const std::vector<SweepRow>& rows);

/// Header plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
std::string format_number(double v);

void write_rounds_csv(const std::filesystem::path& path, const std::vector<RoundReport>& rounds);
void write_ledger_csv(const std::filesystem::path& path, const EnergyLedger& ledger);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRecord>& log);
void write_sizes_csv(const std::filesystem::path& dir, const SizeCalibration& sizes);
void write_roc_csv(const std::filesystem::path& dir, const std::vector<RocResult>& results);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
void write_medians_csv(const std::filesystem::path& path, const std::vector<MedianRow>& rows);

int cmd_calibrate_sizes(const ExperimentConfig& config);
int cmd_roc(const ExperimentConfig& config);
int cmd_run(const ExperimentConfig& config);
int cmd_sweep(const ExperimentConfig& config, SweepAxis axis);

}  // namespace acord
