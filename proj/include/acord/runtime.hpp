#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "acord/common.hpp"
#include "acord/compression.hpp"
#include "acord/dataset.hpp"
#include "acord/energy.hpp"
#include "acord/link.hpp"
#include "acord/model.hpp"
#include "acord/planner.hpp"
#include "acord/rng.hpp"

namespace acord {

/// Measured payload sizes and the straight lines fitted to them. Fitted bits
/// include the per-message link header.
struct SizeCalibration {
  struct DownlinkPoint {
    double prune_fraction = 0.0;
    QuantLevel quant = QuantLevel::k32;
    std::int64_t raw_bits = 0;
    std::int64_t coded_bits = 0;
  };
  struct UplinkPoint {
    int window = 0;
    std::size_t samples = 0;
    std::int64_t raw_bits = 0;
    std::int64_t coded_bits = 0;
  };
  std::vector<DownlinkPoint> downlink_points;
  std::vector<UplinkPoint> uplink_points;
  DownlinkSizeModels downlink;
  SizeModel uplink;
  double pruning_threshold = 1.0;
  std::int64_t header_bits = 0;
};

/// Sweeps P_L over {0, step, ..., 1} at both precisions and W over
/// {0, window_step, ..., max_window}, measuring coded sizes on `reference`.
SizeCalibration calibrate_sizes(const DenseModel& model, const Trace& reference, int max_window,
                                std::int64_t header_bits, int window_step = 25, double prune_step = 0.1);

/// Labeled samples held by the server, with the trace positions they came from.
class LabeledSet {
 public:
  explicit LabeledSet(std::size_t feature_count = 0) : feature_count_(feature_count) {}

  void append(std::size_t position, std::span<const double> features, int label);
  void append(const LabeledSet& other);
  void clear();

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t feature_count() const { return feature_count_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::size_t>& positions() const { return positions_; }
  std::span<const double> features(std::size_t i) const { return {features_.data() + i * feature_count_, feature_count_}; }

  TrainBatch batch() const;
  TrainBatch batch(std::span<const std::size_t> rows) const;

 private:
  std::size_t feature_count_;
  std::vector<double> features_;
  std::vector<int> labels_;
  std::vector<std::size_t> positions_;
};

/// Positions [begin, end) shipped for a trigger at `trigger`.
struct EventWindow {
  std::size_t trigger = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

/// [k - W, k + W] truncated to the trace and to positions not yet sent.
EventWindow event_window(std::size_t trigger, int window, std::size_t trace_size, std::size_t first_unsent = 0);

/// New-round data plus an equal number of rehearsal samples drawn without replacement.
TrainBatch replay_batch(const LabeledSet& round_memory, const LabeledSet& rehearsal, Rng& rng,
                        std::vector<std::size_t>* drawn = nullptr);

struct DeviceState {
  DenseModel model;
  int round = 1;
  std::int64_t inferences = 0;  // in the current round
  double tau = 0.5;
};

struct ServerState {
  LabeledSet round_memory;
  LabeledSet rehearsal;
  DenseModel model;
  TrainBatch last_batch;
};

struct RoundReport {
  int round = 0;
  QuantLevel model_quant = QuantLevel::k32;  // precision the device ran during the round
  Plan plan;
  int uplinks = 0;
  std::int64_t bits_up = 0;
  std::int64_t bits_down = 0;
  double t_ul_s = 0.0;
  double t_dl_s = 0.0;
  std::int64_t inferences = 0;
  std::int64_t detections = 0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t fault_samples = 0;
  double e_comm_j = 0.0;
  double e_comp_j = 0.0;
  double e_total_j = 0.0;
  double recall = 0.0;  // cumulative
  bool model_updated = false;

  friend bool operator==(const RoundReport&, const RoundReport&) = default;
};

struct PredictionRecord {
  std::size_t position = 0;
  std::uint8_t truth = 0;
  std::uint8_t predicted = 0;
  std::uint8_t inferred = 0;
  int round = 0;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Cumulative recall: flagged fault samples over max(1, fault samples seen).
double recall(std::span<const RoundReport> reports);
double recall_from_log(std::span<const PredictionRecord> log);

struct RuntimeConfig {
  EnergyParams energy;
  LinkConfig link;
  int max_window = 200;
  double tau = 0.5;
  double hawk_tau = 0.5;
  int baseline_window = 200;
  /// Overrides the threshold solved from the size calibration.
  std::optional<double> pruning_threshold;
  /// ACORD only: skip the planner and use this plan every round.
  std::optional<Plan> fixed_plan;
  double sample_period_s = 1.0;
  /// Owner fault reports arrive this many samples late.
  std::size_t label_delay = 0;
  double learning_rate = 0.05;
  LossWeights loss_weights{};
  double calibration_percentile = 95.0;
  /// Rate assumed before the first uplink measurement; 0 means the reference rate.
  double initial_rate_bps = 0.0;
  int window_step = 25;
  double prune_step = 0.1;
};

struct InitialState {
  DenseModel model;
  /// Data the size models are calibrated on (the initial training split).
  Trace reference;
};

struct RunResult {
  Policy policy = Policy::kAcord;
  std::vector<RoundReport> rounds;
  std::vector<PredictionRecord> predictions;
  EnergyLedger ledger;
  double recall = 0.0;
  int updates = 0;
  bool stopped = false;
  std::vector<std::size_t> uplinked_positions;
  std::vector<std::size_t> rehearsal_positions;
  SizeCalibration sizes;
  PeriodicSchedule schedule;
};

/// One protocol run over a virtual clock (or a real socket when a transport is supplied).
class Simulation {
 public:
  Simulation(Policy policy, const Trace& trace, const InitialState& initial, const RuntimeConfig& config,
             std::uint64_t seed, Transport* transport = nullptr, const SizeCalibration* sizes = nullptr);

  /// Monitors from the cursor until a trigger (returns its collected window) or the end of the trace.
  std::optional<EventWindow> fd_phase();
  /// Packs, codes and sends the event. Returns the delivery, or nullopt if the budget guard skipped it.
  std::optional<Delivery> uplink_phase(const EventWindow& event);
  /// Labels received samples from ground truth and appends them to the round memory.
  void server_ingest(const SampleBlock& block);
  /// Experience-replay retraining; merges the round memory into the rehearsal store.
  const DenseModel& server_retrain(int window);
  /// Compresses per the plan and ships the model. Returns true when the device installed it.
  bool downlink_phase();

  RunResult run();

  const DeviceState& device() const { return device_; }
  const ServerState& server() const { return server_; }
  const Plan& plan() const { return plan_; }
  const LinkEstimate& estimate() const { return estimate_; }
  const EnergyLedger& ledger() const { return ledger_; }
  const SizeCalibration& sizes() const { return sizes_; }
  std::size_t cursor() const { return cursor_; }
  bool stopped() const { return stopped_; }
  const std::vector<PredictionRecord>& predictions() const { return log_; }

 private:
  Plan current_plan();
  Plan downlink_plan();
  double score_at(std::size_t pos);
  bool observe(std::size_t pos, bool allow_trigger);
  void record_unobserved(std::size_t pos);
  void skip_until_clock();
  double pending_j() const;
  double inference_reserve_j(std::size_t from) const;
  double send_cap_s(double power_w, double reserve_j) const;
  void close_round(bool updated);
  double sample_time(std::size_t pos) const { return static_cast<double>(pos) * config_.sample_period_s; }

  Policy policy_;
  const Trace& trace_;
  RuntimeConfig config_;
  std::uint64_t seed_;
  std::unique_ptr<Transport> owned_transport_;
  Transport* transport_;
  SizeCalibration sizes_;
  double pruning_threshold_ = 1.0;
  PeriodicSchedule schedule_;
  bool periodic_active_ = false;

  DeviceState device_;
  ServerState server_;
  EnergyLedger ledger_;
  LinkEstimate estimate_;
  Plan plan_;

  std::size_t cursor_ = 0;
  std::size_t first_unsent_ = 0;
  double clock_s_ = 0.0;
  bool stopped_ = false;
  bool comm_disabled_ = false;
  bool round_active_ = false;
  int event_count_ = 0;
  int updates_ = 0;
  RoundReport open_;
  std::vector<RoundReport> reports_;
  std::vector<PredictionRecord> log_;
  std::vector<std::size_t> uplinked_;
  std::int64_t cumulative_tp_ = 0;
  std::int64_t cumulative_faults_ = 0;

  std::size_t score_begin_ = 0;
  std::size_t score_block_ = 0;
  Eigen::VectorXd score_cache_;
};

/// Runs one policy over `trace` starting from the initial model.
RunResult run(Policy policy, const Trace& trace, const InitialState& initial, const RuntimeConfig& config,
              std::uint64_t seed, Transport* transport = nullptr);

}  // namespace acord
