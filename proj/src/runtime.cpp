#include "acord/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acord/rng.hpp"

namespace acord {

namespace {

// Slack kept below the budget so rounding in the running sum never crosses it.
constexpr double kBudgetMargin_j = 1e-9;
constexpr std::size_t kMinScoreBlock = 128;
constexpr std::size_t kMaxScoreBlock = 4096;

TrainBatch gather(const LabeledSet& a, std::span<const std::size_t> rows_a, const LabeledSet& b,
                  std::span<const std::size_t> rows_b) {
  const auto n = static_cast<Eigen::Index>(std::max(a.feature_count(), b.feature_count()));
  TrainBatch batch;
  batch.inputs.resize(n, static_cast<Eigen::Index>(rows_a.size() + rows_b.size()));
  Eigen::Index col = 0;
  auto put = [&](const LabeledSet& set, std::size_t row) {
    const auto f = set.features(row);
    for (Eigen::Index i = 0; i < n; ++i) batch.inputs(i, col) = f[static_cast<std::size_t>(i)];
    batch.labels.push_back(set.labels()[row]);
    ++col;
  };
  for (auto r : rows_a) put(a, r);
  for (auto r : rows_b) put(b, r);
  return batch;
}

}  // namespace

std::string to_string(Policy p) {
  switch (p) {
    case Policy::kAcord:
      return "acord";
    case Policy::kHawk:
      return "hawk";
    case Policy::kPeriodic:
      return "periodic";
  }
  throw Error("unknown policy");
}

Policy policy_from_string(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "acord") return Policy::kAcord;
  if (s == "hawk") return Policy::kHawk;
  if (s == "periodic") return Policy::kPeriodic;
  throw Error("unknown policy '" + name + "' (expected acord, hawk or periodic)");
}

SizeCalibration calibrate_sizes(const DenseModel& model, const Trace& reference, int max_window,
                                std::int64_t header_bits, int window_step, double prune_step) {
  if (reference.empty()) throw Error("size calibration needs reference samples");
  if (max_window < 1 || window_step < 1) throw Error("size calibration needs W_max >= 1 and a positive step");
  if (!(prune_step > 0.0 && prune_step <= 1.0)) throw Error("pruning step must lie in (0, 1]");

  SizeCalibration out;
  out.header_bits = header_bits;
  const auto hb = static_cast<double>(header_bits);

  std::vector<std::pair<double, double>> pts8, pts32;
  for (double p : threshold_grid(prune_step)) {
    for (QuantLevel q : {QuantLevel::k8, QuantLevel::k32}) {
      const DenseModel m = quantize(prune(model, p), q);
      const Bytes raw = serialize(m);
      const Bytes coded = lossless_code(raw);
      SizeCalibration::DownlinkPoint pt;
      pt.prune_fraction = p;
      pt.quant = q;
      pt.raw_bits = 8 * static_cast<std::int64_t>(raw.size());
      pt.coded_bits = 8 * static_cast<std::int64_t>(coded.size());
      out.downlink_points.push_back(pt);
      (q == QuantLevel::k8 ? pts8 : pts32).emplace_back(p, hb + static_cast<double>(pt.coded_bits));
    }
  }
  out.downlink.q8 = fit_size_model(pts8);
  out.downlink.q32 = fit_size_model(pts32);

  std::vector<int> windows;
  for (int w = 0; w < max_window; w += window_step) windows.push_back(w);
  windows.push_back(max_window);

  std::vector<std::pair<double, double>> ul;
  for (int w : windows) {
    const std::size_t count = 2 * static_cast<std::size_t>(w) + 1;
    Trace block(reference.feature_count());
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = i % reference.size();
      block.push_back(i, reference.features(src), reference.label(src));
    }
    const Payload p = make_data_payload(block, 0, count, w);
    out.uplink_points.push_back({w, count, p.raw_bits, p.coded_bits});
    ul.emplace_back(static_cast<double>(w), hb + static_cast<double>(p.coded_bits));
  }
  out.uplink = fit_size_model(ul);
  out.pruning_threshold = pruning_threshold(out.downlink.q32, out.downlink.q8);
  return out;
}

void LabeledSet::append(std::size_t position, std::span<const double> features, int label) {
  if (feature_count_ == 0) feature_count_ = features.size();
  if (features.size() != feature_count_) throw Error("labeled sample has the wrong number of features");
  features_.insert(features_.end(), features.begin(), features.end());
  labels_.push_back(label);
  positions_.push_back(position);
}

void LabeledSet::append(const LabeledSet& other) {
  for (std::size_t i = 0; i < other.size(); ++i) append(other.positions_[i], other.features(i), other.labels_[i]);
}

void LabeledSet::clear() {
  features_.clear();
  labels_.clear();
  positions_.clear();
}

TrainBatch LabeledSet::batch() const {
  std::vector<std::size_t> rows(size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return batch(rows);
}

TrainBatch LabeledSet::batch(std::span<const std::size_t> rows) const { return gather(*this, rows, *this, {}); }

EventWindow event_window(std::size_t trigger, int window, std::size_t trace_size, std::size_t first_unsent) {
  if (window < 0) throw Error("context window must be non-negative");
  if (trigger >= trace_size) throw Error("trigger lies outside the trace");
  if (first_unsent > trigger) throw Error("trigger precedes samples already sent");
  const auto w = static_cast<std::size_t>(window);
  EventWindow e;
  e.trigger = trigger;
  e.begin = std::max(trigger >= w ? trigger - w : 0, first_unsent);
  e.end = std::min(trigger + w, trace_size - 1) + 1;
  return e;
}

TrainBatch replay_batch(const LabeledSet& round_memory, const LabeledSet& rehearsal, Rng& rng,
                        std::vector<std::size_t>* drawn) {
  std::vector<std::size_t> fresh(round_memory.size());
  std::iota(fresh.begin(), fresh.end(), std::size_t{0});
  const std::size_t m = std::min(round_memory.size(), rehearsal.size());
  std::vector<std::size_t> pool(rehearsal.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  if (drawn) *drawn = pool;
  return gather(round_memory, fresh, rehearsal, pool);
}

double recall(std::span<const RoundReport> reports) {
  std::int64_t tp = 0, faults = 0;
  for (const auto& r : reports) {
    tp += r.true_positives;
    faults += r.fault_samples;
  }
  return static_cast<double>(tp) / static_cast<double>(std::max<std::int64_t>(1, faults));
}

double recall_from_log(std::span<const PredictionRecord> log) {
  std::int64_t tp = 0, faults = 0;
  for (const auto& r : log) {
    faults += r.truth;
    tp += r.truth && r.predicted;
  }
  return static_cast<double>(tp) / static_cast<double>(std::max<std::int64_t>(1, faults));
}

Simulation::Simulation(Policy policy, const Trace& trace, const InitialState& initial, const RuntimeConfig& config,
                       std::uint64_t seed, Transport* transport, const SizeCalibration* sizes)
    : policy_(policy), trace_(trace), config_(config), seed_(seed), ledger_(config.energy.budget_j) {
  config_.energy.validate();
  if (trace_.empty()) throw Error("cannot run on an empty trace");
  if (initial.model.input_dim() != static_cast<int>(trace_.feature_count())) {
    throw Error("model input width does not match the trace");
  }
  if (!(config_.sample_period_s > 0.0)) throw Error("sampling period must be positive");
  if (config_.max_window < 1) throw Error("maximum context window must be at least 1");

  if (transport) {
    transport_ = transport;
  } else {
    owned_transport_ = std::make_unique<SimulatedTransport>(config_.link);
    transport_ = owned_transport_.get();
  }
  transport_->begin_round(1);

  sizes_ = sizes ? *sizes
                 : calibrate_sizes(initial.model, initial.reference, config_.max_window, transport_->header_bits(),
                                   config_.window_step, config_.prune_step);
  pruning_threshold_ = config_.pruning_threshold.value_or(sizes_.pruning_threshold);

  const double initial_rate =
      config_.initial_rate_bps > 0.0 ? config_.initial_rate_bps : config_.energy.reference_rate_bps;
  estimate_.uplink_bps = initial_rate;
  estimate_.downlink_bps = initial_rate;

  device_.model = initial.model;
  device_.tau = policy_ == Policy::kHawk ? config_.hawk_tau : config_.tau;
  server_.model = initial.model;
  server_.round_memory = LabeledSet(trace_.feature_count());
  server_.rehearsal = LabeledSet(trace_.feature_count());

  if (policy_ == Policy::kPeriodic) {
    EventCost cost;
    cost.uplink_bits = sizes_.uplink.predict(config_.baseline_window);
    cost.downlink_bits = sizes_.downlink.q32.predict(0.0);
    cost.rate_bps = config_.link.bandwidth_for_round(1);
    try {
      schedule_ = baseline_policy(policy_, config_.energy.budget_j, trace_.size(), cost, config_.energy,
                                  device_.tau, config_.baseline_window)
                      .schedule;
      periodic_active_ = true;
    } catch (const Error&) {
      periodic_active_ = false;  // not even one event fits
      schedule_.period = 0;
      schedule_.event_j = event_energy(cost, config_.energy);
    }
  }
  open_.model_quant = device_.model.compression().quant;
  plan_ = current_plan();
}

Plan Simulation::current_plan() {
  if (policy_ != Policy::kAcord) return Plan{0.0, QuantLevel::k32, config_.baseline_window, device_.tau};
  if (config_.fixed_plan) {
    Plan p = *config_.fixed_plan;
    p.tau = device_.tau;
    return p;
  }
  PlanInputs in;
  in.budget_j = config_.energy.budget_j;
  in.compute_energy_estimate_j =
      static_cast<double>(trace_.size()) * config_.energy.inference_energy(device_.model.compression().quant);
  in.reference_energy_j = config_.energy.reference_energy_j;
  in.reference_rate_bps = config_.energy.reference_rate_bps;
  in.estimate = estimate_;
  in.downlink = sizes_.downlink;
  in.uplink = sizes_.uplink;
  in.max_window = config_.max_window;
  in.pruning_threshold = pruning_threshold_;
  if (!(in.budget_j > in.compute_energy_estimate_j)) {
    comm_disabled_ = true;
    return Plan{1.0, QuantLevel::k8, 0, device_.tau};
  }
  comm_disabled_ = false;
  if (std::isinf(in.budget_j)) return Plan{0.0, QuantLevel::k32, config_.max_window, device_.tau};
  return plan_round(in, device_.tau);
}

Plan Simulation::downlink_plan() {
  if (policy_ != Policy::kAcord) return plan_;
  Plan p = current_plan();
  p.window = plan_.window;
  return p;
}

double Simulation::score_at(std::size_t pos) {
  const auto cached = static_cast<std::size_t>(score_cache_.size());
  if (pos < score_begin_ || pos >= score_begin_ + cached) {
    // Blocks grow while the model stays unchanged; a fresh model starts small.
    score_block_ = cached == 0 ? kMinScoreBlock : std::min(kMaxScoreBlock, 2 * score_block_);
    score_begin_ = pos;
    const std::size_t end = std::min(trace_.size(), pos + score_block_);
    score_cache_ = fault_scores(device_.model, trace_block(trace_, pos, end));
  }
  return score_cache_(static_cast<Eigen::Index>(pos - score_begin_));
}

double Simulation::pending_j() const {
  return comm_energy(open_.t_ul_s, open_.t_dl_s, config_.energy) +
         comp_energy(open_.inferences, open_.model_quant, config_.energy);
}

double Simulation::inference_reserve_j(std::size_t from) const {
  if (policy_ != Policy::kAcord || from >= trace_.size()) return 0.0;
  const double e = std::max(config_.energy.inference_j_q8, config_.energy.inference_j_q32);
  return static_cast<double>(trace_.size() - from) * e;
}

double Simulation::send_cap_s(double power_w, double reserve_j) const {
  const double left = ledger_.budget_j() - ledger_.total_j() - pending_j() - reserve_j - kBudgetMargin_j;
  return std::max(0.0, left / power_w);
}

void Simulation::record_unobserved(std::size_t pos) {
  PredictionRecord r;
  r.position = pos;
  r.truth = static_cast<std::uint8_t>(trace_.label(pos));
  r.round = device_.round;
  open_.fault_samples += r.truth;
  log_.push_back(r);
  round_active_ = true;
}

bool Simulation::observe(std::size_t pos, bool allow_trigger) {
  PredictionRecord r;
  r.position = pos;
  r.truth = static_cast<std::uint8_t>(trace_.label(pos));
  r.round = device_.round;
  bool flagged = false;
  if (policy_ == Policy::kPeriodic) {
    flagged = allow_trigger && periodic_active_ && (pos + 1) % schedule_.period == 0;
  } else {
    const double e = config_.energy.inference_energy(open_.model_quant);
    if (ledger_.would_exceed(pending_j() + e + kBudgetMargin_j)) {
      stopped_ = true;
      return false;
    }
    ++open_.inferences;
    r.inferred = 1;
    flagged = score_at(pos) > device_.tau;
  }
  r.predicted = flagged;
  open_.detections += flagged;
  open_.true_positives += flagged && r.truth;
  open_.false_positives += flagged && !r.truth;
  open_.fault_samples += r.truth;
  log_.push_back(r);
  round_active_ = true;
  return flagged && allow_trigger;
}

void Simulation::skip_until_clock() {
  while (cursor_ < trace_.size() && sample_time(cursor_) < clock_s_) record_unobserved(cursor_++);
}

std::optional<EventWindow> Simulation::fd_phase() {
  skip_until_clock();
  while (cursor_ < trace_.size() && !stopped_) {
    const std::size_t pos = cursor_;
    const bool trigger = observe(pos, true);
    if (stopped_) return std::nullopt;
    ++cursor_;
    if (!trigger) continue;
    const EventWindow ev = event_window(pos, plan_.window, trace_.size(), first_unsent_);
    while (cursor_ < ev.end) {
      observe(cursor_, false);
      if (stopped_) return std::nullopt;
      ++cursor_;
    }
    return ev;
  }
  return std::nullopt;
}

std::optional<Delivery> Simulation::uplink_phase(const EventWindow& event) {
  if (comm_disabled_ || stopped_) return std::nullopt;
  const Payload payload = make_data_payload(trace_, event.begin, event.end, plan_.window);
  const auto header = static_cast<double>(transport_->header_bits());
  const double ul_j = (header + static_cast<double>(payload.coded_bits)) / estimate_.uplink_bps *
                      config_.energy.tx_power_w;
  const double dl_j = sizes_.downlink.at(plan_.quant).predict(plan_.prune_fraction) / estimate_.downlink_bps *
                      config_.energy.rx_power_w;
  const double reserve = inference_reserve_j(event.end);
  if (ledger_.would_exceed(pending_j() + ul_j + dl_j + reserve + kBudgetMargin_j)) {
    if (policy_ == Policy::kHawk) stopped_ = true;
    return std::nullopt;
  }

  Delivery d = transport_->send(Direction::kUplink, PayloadKind::kData, payload.bytes,
                                send_cap_s(config_.energy.tx_power_w, reserve));
  open_.t_ul_s += d.elapsed_s;
  clock_s_ = std::max(clock_s_, sample_time(event.end - 1)) + d.elapsed_s;
  if (d.completed) {
    const double wire = header + 8.0 * static_cast<double>(d.bytes);
    estimate_.update(wire, d.elapsed_s, device_.round);
    open_.bits_up += static_cast<std::int64_t>(wire);
    ++open_.uplinks;
    for (std::size_t p = event.begin; p < event.end; ++p) uplinked_.push_back(p);
    first_unsent_ = event.end;
  } else if (policy_ == Policy::kHawk) {
    stopped_ = true;
  }
  return d;
}

void Simulation::server_ingest(const SampleBlock& block) {
  if (block.feature_count != trace_.feature_count()) throw Error("received block has the wrong width");
  if (block.first + block.count > trace_.size()) throw Error("received block lies outside the trace");
  // The owner reports faults only once label_delay samples have passed.
  const std::size_t now = cursor_ == 0 ? 0 : cursor_ - 1;
  for (std::size_t i = 0; i < block.count; ++i) {
    const std::size_t pos = block.first + i;
    const int label = pos + config_.label_delay <= now ? trace_.label(pos) : 0;
    server_.round_memory.append(pos, {block.features.data() + i * block.feature_count, block.feature_count},
                                label);
  }
}

const DenseModel& Simulation::server_retrain(int window) {
  if (server_.round_memory.empty()) throw Error("server has no new samples to train on");
  Rng rng(derive_seed(seed_, 0x7e91a000ULL + static_cast<std::uint64_t>(event_count_)));
  server_.last_batch = replay_batch(server_.round_memory, server_.rehearsal, rng);
  TrainOptions opts;
  opts.epochs = epochs_for_window(window);
  opts.learning_rate = config_.learning_rate;
  opts.loss_weights = config_.loss_weights;
  opts.calibration_percentile = config_.calibration_percentile;
  server_.model = train(server_.model, server_.last_batch, opts);
  server_.rehearsal.append(server_.round_memory);
  server_.round_memory.clear();
  return server_.model;
}

bool Simulation::downlink_phase() {
  if (stopped_ || comm_disabled_) return false;
  const Plan dl = downlink_plan();
  DenseModel compressed = quantize(prune(server_.model, dl.prune_fraction), dl.quant, server_.last_batch.inputs);
  if (compressed.head() == Head::kAutoencoder) calibrate_reference_error(compressed, server_.last_batch, config_.calibration_percentile);
  const Payload payload = make_model_payload(compressed);
  const auto header = static_cast<double>(transport_->header_bits());
  const double dl_j =
      (header + static_cast<double>(payload.coded_bits)) / estimate_.downlink_bps * config_.energy.rx_power_w;
  const double reserve = inference_reserve_j(cursor_);
  if (ledger_.would_exceed(pending_j() + dl_j + reserve + kBudgetMargin_j)) {
    if (policy_ == Policy::kHawk) stopped_ = true;
    return false;
  }
  Delivery d = transport_->send(Direction::kDownlink, PayloadKind::kModel, payload.bytes,
                                send_cap_s(config_.energy.rx_power_w, reserve));
  open_.t_dl_s += d.elapsed_s;
  clock_s_ += d.elapsed_s;
  if (!d.completed) {
    if (policy_ == Policy::kHawk) stopped_ = true;
    return false;
  }
  open_.bits_down += static_cast<std::int64_t>(header + 8.0 * static_cast<double>(d.bytes));
  device_.model = deserialize(lossless_decode(d.payload));
  server_.model = compressed;
  score_cache_.resize(0);
  open_.plan.prune_fraction = dl.prune_fraction;
  open_.plan.quant = dl.quant;
  return true;
}

void Simulation::close_round(bool updated) {
  RoundReport r = open_;
  r.round = device_.round;
  r.e_comm_j = comm_energy(r.t_ul_s, r.t_dl_s, config_.energy);
  r.e_comp_j = comp_energy(r.inferences, r.model_quant, config_.energy);
  ledger_.accrue_round(r.e_comm_j, r.e_comp_j);
  r.e_total_j = ledger_.total_j();
  cumulative_tp_ += r.true_positives;
  cumulative_faults_ += r.fault_samples;
  r.recall = static_cast<double>(cumulative_tp_) / static_cast<double>(std::max<std::int64_t>(1, cumulative_faults_));
  r.model_updated = updated;
  reports_.push_back(r);

  open_ = RoundReport{};
  round_active_ = false;
  if (updated) {
    ++updates_;
    ++device_.round;
    transport_->begin_round(device_.round);
  }
  device_.inferences = 0;
  open_.model_quant = device_.model.compression().quant;
  open_.plan = plan_;
}

RunResult Simulation::run() {
  while (!stopped_ && cursor_ < trace_.size()) {
    plan_ = current_plan();
    open_.plan = plan_;
    const auto event = fd_phase();
    device_.inferences = open_.inferences;
    if (!event) break;
    ++event_count_;
    const auto delivery = uplink_phase(*event);
    if (stopped_) break;
    if (!delivery || !delivery->completed) {
      skip_until_clock();
      continue;
    }
    server_ingest(decode_samples(lossless_decode(delivery->payload)));
    server_retrain(plan_.window);
    const bool installed = downlink_phase();
    if (stopped_) break;
    skip_until_clock();
    if (installed) close_round(true);
  }
  while (cursor_ < trace_.size()) record_unobserved(cursor_++);
  if (round_active_ || open_.t_ul_s > 0.0 || open_.t_dl_s > 0.0) close_round(false);

  RunResult out;
  out.policy = policy_;
  out.rounds = reports_;
  out.predictions = log_;
  out.ledger = ledger_;
  out.recall = recall(reports_);
  out.updates = updates_;
  out.stopped = stopped_;
  out.uplinked_positions = uplinked_;
  out.rehearsal_positions = server_.rehearsal.positions();
  out.sizes = sizes_;
  out.schedule = schedule_;
  return out;
}

RunResult run(Policy policy, const Trace& trace, const InitialState& initial, const RuntimeConfig& config,
              std::uint64_t seed, Transport* transport) {
  return Simulation(policy, trace, initial, config, seed, transport).run();
}

}  // namespace acord
