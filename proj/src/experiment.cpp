#include "acord/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <utility>

#include "acord/rng.hpp"

namespace acord {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto t = trim(v);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw Error("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto t = trim(v);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw Error("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return x;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < 0) throw Error("config key '" + key + "': must be non-negative");
  return static_cast<std::size_t>(x);
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  return out;
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) out.push_back(static_cast<int>(to_int(key, item)));
  return out;
}

std::optional<double> to_auto_double(const std::string& key, const std::string& v) {
  if (trim(v) == "auto") return std::nullopt;
  return to_double(key, v);
}

Head head_from_string(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "ae") return Head::kAutoencoder;
  if (t == "mlp") return Head::kClassifier;
  throw Error("config key '" + key + "': expected ae or mlp, got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"dataset", [](auto& c, auto&, auto& v) { c.dataset = trim(v); }},
      {"synth_length", [](auto& c, auto& k, auto& v) { c.synth.length = to_size(k, v); }},
      {"synth_features", [](auto& c, auto& k, auto& v) { c.synth.feature_count = to_size(k, v); }},
      {"synth_fault_events", [](auto& c, auto& k, auto& v) { c.synth.fault_events = to_size(k, v); }},
      {"synth_coherence", [](auto& c, auto& k, auto& v) { c.synth.coherence_length = to_size(k, v); }},
      {"synth_noise", [](auto& c, auto& k, auto& v) { c.synth.noise_scale = to_double(k, v); }},
      {"synth_latent_dim", [](auto& c, auto& k, auto& v) { c.synth.latent_dim = to_size(k, v); }},
      {"synth_drift", [](auto& c, auto& k, auto& v) { c.synth.drift = to_double(k, v); }},
      {"synth_fault_shift", [](auto& c, auto& k, auto& v) { c.synth.fault_shift = to_double(k, v); }},
      {"synth_precursor", [](auto& c, auto& k, auto& v) { c.synth.precursor_fraction = to_double(k, v); }},
      {"synth_fault_start", [](auto& c, auto& k, auto& v) { c.synth.fault_start_fraction = to_double(k, v); }},
      {"status_column", [](auto& c, auto&, auto& v) { c.schema.status_column = trim(v); }},
      {"feature_columns", [](auto& c, auto&, auto& v) { c.schema.feature_columns = split_list(v); }},
      {"feature_prefix", [](auto& c, auto&, auto& v) { c.schema.feature_prefix = trim(v); }},
      {"exclude_columns", [](auto& c, auto&, auto& v) { c.schema.exclude_columns = split_list(v); }},
      {"train_fraction", [](auto& c, auto& k, auto& v) { c.schema.train_fraction = to_double(k, v); }},
      {"policies",
       [](auto& c, auto&, auto& v) {
         c.policies.clear();
         for (const auto& p : split_list(v)) c.policies.push_back(policy_from_string(p));
       }},
      {"energy_thresholds", [](auto& c, auto& k, auto& v) { c.energy_thresholds = to_doubles(k, v); }},
      {"bandwidths", [](auto& c, auto& k, auto& v) { c.bandwidths = to_doubles(k, v); }},
      {"seeds",
       [](auto& c, auto& k, auto& v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) {
           const long long x = to_int(k, s);
           if (x < 0) throw Error("config key '" + k + "': seeds must be non-negative");
           c.seeds.push_back(static_cast<std::uint64_t>(x));
         }
       }},
      {"policy", [](auto& c, auto&, auto& v) { c.policy = policy_from_string(trim(v)); }},
      {"energy_threshold", [](auto& c, auto& k, auto& v) { c.energy_threshold = to_double(k, v); }},
      {"bandwidth", [](auto& c, auto& k, auto& v) { c.bandwidth = to_double(k, v); }},
      {"bandwidth_schedule", [](auto& c, auto& k, auto& v) { c.bandwidth_schedule = to_doubles(k, v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = to_size(k, v); }},
      {"tx_power_w", [](auto& c, auto& k, auto& v) { c.energy.tx_power_w = to_double(k, v); }},
      {"rx_power_w", [](auto& c, auto& k, auto& v) { c.energy.rx_power_w = to_double(k, v); }},
      {"e_inf_q8_j", [](auto& c, auto& k, auto& v) { c.energy.inference_j_q8 = to_double(k, v); }},
      {"e_inf_q32_j", [](auto& c, auto& k, auto& v) { c.energy.inference_j_q32 = to_double(k, v); }},
      {"e_ref_j", [](auto& c, auto& k, auto& v) { c.energy.reference_energy_j = to_double(k, v); }},
      {"r_ref_bps", [](auto& c, auto& k, auto& v) { c.energy.reference_rate_bps = to_double(k, v); }},
      {"header_bits", [](auto& c, auto& k, auto& v) { c.header_bits = to_int(k, v); }},
      {"sample_period_s", [](auto& c, auto& k, auto& v) { c.sample_period_s = to_double(k, v); }},
      {"initial_rate_bps", [](auto& c, auto& k, auto& v) { c.initial_rate_bps = to_double(k, v); }},
      {"max_window", [](auto& c, auto& k, auto& v) { c.max_window = static_cast<int>(to_int(k, v)); }},
      {"window_step", [](auto& c, auto& k, auto& v) { c.window_step = static_cast<int>(to_int(k, v)); }},
      {"prune_step", [](auto& c, auto& k, auto& v) { c.prune_step = to_double(k, v); }},
      {"grid_step", [](auto& c, auto& k, auto& v) { c.grid_step = to_double(k, v); }},
      {"pruning_threshold", [](auto& c, auto& k, auto& v) { c.pruning_threshold = to_auto_double(k, v); }},
      {"tau", [](auto& c, auto& k, auto& v) { c.tau = to_auto_double(k, v); }},
      {"hawk_tau", [](auto& c, auto& k, auto& v) { c.hawk_tau = to_double(k, v); }},
      {"baseline_window", [](auto& c, auto& k, auto& v) { c.baseline_window = static_cast<int>(to_int(k, v)); }},
      {"detector", [](auto& c, auto& k, auto& v) { c.detector = head_from_string(k, v); }},
      {"ae_hidden", [](auto& c, auto& k, auto& v) { c.ae_hidden = to_ints(k, v); }},
      {"mlp_hidden", [](auto& c, auto& k, auto& v) { c.mlp_hidden = to_ints(k, v); }},
      {"initial_epochs", [](auto& c, auto& k, auto& v) { c.initial_epochs = static_cast<int>(to_int(k, v)); }},
      {"initial_learning_rate", [](auto& c, auto& k, auto& v) { c.initial_learning_rate = to_double(k, v); }},
      {"learning_rate", [](auto& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"lambda_fault", [](auto& c, auto& k, auto& v) { c.loss_weights.fault = to_double(k, v); }},
      {"lambda_normal", [](auto& c, auto& k, auto& v) { c.loss_weights.normal = to_double(k, v); }},
      {"calibration_percentile", [](auto& c, auto& k, auto& v) { c.calibration_percentile = to_double(k, v); }},
      {"label_delay", [](auto& c, auto& k, auto& v) { c.label_delay = to_size(k, v); }},
      {"workers", [](auto& c, auto& k, auto& v) { c.workers = static_cast<int>(to_int(k, v)); }},
      {"out", [](auto& c, auto&, auto& v) { c.out = trim(v); }},
      {"socket", [](auto& c, auto&, auto& v) { c.socket = trim(v); }},
  };
  return table;
}

void ensure_dir(const fs::path& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

std::ofstream open_out(const fs::path& path) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string head_name(Head h) { return h == Head::kAutoencoder ? "ae" : "mlp"; }

std::string clean_cell(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  unsigned w = workers > 0 ? static_cast<unsigned>(workers) : std::max(1u, std::thread::hardware_concurrency());
  w = static_cast<unsigned>(std::min<std::size_t>(w, n));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::pair<std::string, int> parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error("socket must be HOST:PORT, got '" + s + "'");
  const auto port = to_int("socket", s.substr(colon + 1));
  if (port < 0 || port > 65535) throw Error("socket port out of range: " + s);
  return {s.substr(0, colon), static_cast<int>(port)};
}

}  // namespace

SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "energy") return SweepAxis::kEnergy;
  if (name == "bandwidth") return SweepAxis::kBandwidth;
  throw Error("unknown sweep axis '" + name + "' (expected energy or bandwidth)");
}

std::string to_string(SweepAxis axis) { return axis == SweepAxis::kEnergy ? "energy" : "bandwidth"; }

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> k;
    for (const auto& [name, fn] : setters()) k.push_back(name);
    return k;
  }();
  return names;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, fn] : setters()) {
    if (name == key) {
      fn(*this, key, value);
      return;
    }
  }
  throw Error("unknown config key '" + key + "'");
}

void ExperimentConfig::validate() const {
  if (policies.empty()) throw Error("config key 'policies': list must not be empty");
  if (energy_thresholds.empty()) throw Error("config key 'energy_thresholds': list must not be empty");
  if (bandwidths.empty()) throw Error("config key 'bandwidths': list must not be empty");
  if (seeds.empty()) throw Error("config key 'seeds': at least one seed is required");
  for (double e : energy_thresholds) {
    if (!(e >= 0.0)) throw Error("config key 'energy_thresholds': values must be non-negative");
  }
  for (double b : bandwidths) {
    if (!(b > 0.0)) throw Error("config key 'bandwidths': values must be positive");
  }
  if (!(bandwidth > 0.0)) throw Error("config key 'bandwidth': must be positive");
  if (!(energy_threshold >= 0.0)) throw Error("config key 'energy_threshold': must be non-negative");
  if (max_window < 1) throw Error("config key 'max_window': must be at least 1");
  if (window_step < 1) throw Error("config key 'window_step': must be at least 1");
  if (baseline_window < 0) throw Error("config key 'baseline_window': must be non-negative");
  if (initial_epochs < 0) throw Error("config key 'initial_epochs': must be non-negative");
  if (header_bits < 0) throw Error("config key 'header_bits': must be non-negative");
  if (pruning_threshold && !(*pruning_threshold >= 0.0 && *pruning_threshold <= 1.0)) {
    throw Error("config key 'pruning_threshold': must lie in [0, 1]");
  }
  if (tau && !(*tau >= 0.0 && *tau <= 1.0)) throw Error("config key 'tau': must lie in [0, 1]");
  if (!(hawk_tau >= 0.0 && hawk_tau <= 1.0)) throw Error("config key 'hawk_tau': must lie in [0, 1]");
  energy.validate();
}

std::vector<int> ExperimentConfig::dims(Head head, std::size_t feature_count) const {
  std::vector<int> d = {static_cast<int>(feature_count)};
  const auto& hidden = head == Head::kAutoencoder ? ae_hidden : mlp_hidden;
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(head == Head::kAutoencoder ? static_cast<int>(feature_count) : 1);
  return d;
}

RuntimeConfig ExperimentConfig::runtime(double energy_threshold_j, double bandwidth_bps, double tau_value) const {
  RuntimeConfig rc;
  rc.energy = energy;
  rc.energy.budget_j = energy_threshold_j;
  rc.link.bandwidth_bps = bandwidth_bps;
  rc.link.schedule_bps = bandwidth_schedule;
  rc.link.header_bits = header_bits;
  rc.max_window = max_window;
  rc.tau = tau_value;
  rc.hawk_tau = hawk_tau;
  rc.baseline_window = baseline_window;
  rc.pruning_threshold = pruning_threshold;
  rc.sample_period_s = sample_period_s;
  rc.label_delay = label_delay;
  rc.learning_rate = learning_rate;
  rc.loss_weights = loss_weights;
  rc.calibration_percentile = calibration_percentile;
  rc.initial_rate_bps = initial_rate_bps;
  rc.window_step = window_step;
  rc.prune_step = prune_step;
  return rc;
}

void apply_config_text(ExperimentConfig& config, std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    config.set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig c;
  apply_config_text(c, ss.str(), path.string());
  return c;
}

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  const SplitSpec spec{config.schema.train_fraction, true};
  PreparedData d;
  if (config.dataset == "synth") {
    auto [train, test] = split_initial(synth_trace(config.synth, seed), spec);
    const MinMaxScaler scaler = MinMaxScaler::fit(train);
    scaler.apply(train);
    scaler.apply(test);
    auto [vtrain, vtest] = split_initial(synth_trace(config.synth, derive_seed(seed, 0x7a11d)), spec);
    scaler.apply(vtest);
    d.train = std::move(train);
    d.test = std::move(test);
    d.validation = std::move(vtest);
  } else {
    auto [train, test] = split_initial(load_trace(config.dataset, config.schema), spec);
    d.train = std::move(train);
    d.validation = test;
    d.test = std::move(test);
  }
  return d;
}

DenseModel train_initial_model(const ExperimentConfig& config, Head head, const Trace& data, std::uint64_t seed) {
  DenseModel model = DenseModel::random(head, config.dims(head, data.feature_count()),
                                        derive_seed(seed, 0x1417 + static_cast<std::uint64_t>(head)));
  TrainBatch batch;
  batch.inputs = trace_block(data, 0, data.size());
  for (std::size_t p = 0; p < data.size(); ++p) batch.labels.push_back(data.label(p));
  TrainOptions opts;
  opts.epochs = config.initial_epochs;
  opts.learning_rate = config.initial_learning_rate;
  opts.loss_weights = config.loss_weights;
  opts.calibration_percentile = config.calibration_percentile;
  return train(std::move(model), batch, opts);
}

SeedContext make_seed_context(const ExperimentConfig& config, Head head, std::uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;
  ctx.data = prepare_data(config, seed);
  ctx.initial.model = train_initial_model(config, head, ctx.data.train, seed);
  ctx.initial.reference = ctx.data.train;
  ctx.sizes = calibrate_sizes(ctx.initial.model, ctx.initial.reference, config.max_window, config.header_bits,
                              config.window_step, config.prune_step);
  return ctx;
}

RunResult run_with_context(const ExperimentConfig& config, const SeedContext& ctx, Policy policy,
                           double energy_threshold_j, double bandwidth_bps, double tau_value, Transport* transport) {
  const RuntimeConfig rc = config.runtime(energy_threshold_j, bandwidth_bps, tau_value);
  const SizeCalibration* sizes =
      transport && transport->header_bits() != ctx.sizes.header_bits ? nullptr : &ctx.sizes;
  return Simulation(policy, ctx.data.test, ctx.initial, rc, ctx.seed, transport, sizes).run();
}

RocResult roc_dry_run(const ExperimentConfig& config, const SeedContext& ctx) {
  RocResult out;
  out.detector = head_name(ctx.initial.model.head());
  std::vector<RocPoint> curve;
  bool any_positive = false;
  for (double tau : threshold_grid(config.grid_step)) {
    RuntimeConfig rc = config.runtime(kInfinity, config.bandwidth, tau);
    rc.hawk_tau = tau;
    const RunResult r = Simulation(Policy::kHawk, ctx.data.validation, ctx.initial, rc, ctx.seed, nullptr, &ctx.sizes).run();
    std::size_t pos = 0, neg = 0, tp = 0, fp = 0;
    for (const auto& p : r.predictions) {
      if (!p.inferred) continue;
      if (p.truth) {
        ++pos;
        tp += p.predicted;
      } else {
        ++neg;
        fp += p.predicted;
      }
    }
    any_positive = any_positive || pos > 0;
    RocPoint pt;
    pt.tau = tau;
    pt.tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
    pt.fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
    curve.push_back(pt);
  }
  out.auc = roc_auc(curve);
  if (any_positive) {
    out.choice = select_threshold(curve);
  } else {
    out.no_positives = true;
    out.choice.tau = 0.5;
    out.choice.objective = std::nan("");
    out.choice.curve = curve;
  }
  return out;
}

double resolve_tau(const ExperimentConfig& config, const SeedContext& ctx) {
  if (config.tau) return *config.tau;
  return roc_dry_run(config, ctx).choice.tau;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, SweepAxis axis, double tau_value) {
  config.validate();
  std::vector<SeedContext> contexts(config.seeds.size());
  parallel_for(contexts.size(), config.workers,
               [&](std::size_t i) { contexts[i] = make_seed_context(config, config.detector, config.seeds[i]); });

  const auto& values = axis == SweepAxis::kEnergy ? config.energy_thresholds : config.bandwidths;
  std::vector<SweepRow> rows;
  for (Policy p : config.policies) {
    for (double v : values) {
      for (std::uint64_t s : config.seeds) {
        SweepRow r;
        r.policy = p;
        r.energy_threshold_j = axis == SweepAxis::kEnergy ? v : config.energy_threshold;
        r.bandwidth_bps = axis == SweepAxis::kBandwidth ? v : config.bandwidth;
        r.seed = s;
        rows.push_back(r);
      }
    }
  }
  parallel_for(rows.size(), config.workers, [&](std::size_t i) {
    SweepRow& r = rows[i];
    const auto it = std::find(config.seeds.begin(), config.seeds.end(), r.seed);
    const SeedContext& ctx = contexts[static_cast<std::size_t>(it - config.seeds.begin())];
    try {
      const RunResult res = run_with_context(config, ctx, r.policy, r.energy_threshold_j, r.bandwidth_bps, tau_value);
      r.recall = res.recall;
      r.e_total_j = res.ledger.total_j();
      r.rounds = res.updates;
    } catch (const std::exception& e) {
      r.recall = std::nan("");
      r.e_total_j = std::nan("");
      r.status = clean_cell(std::string("error: ") + e.what());
    }
  });
  return rows;
}

std::vector<MedianRow> sweep_medians(const std::vector<SweepRow>& rows) {
  std::vector<MedianRow> out;
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> groups;
  auto same = [](const MedianRow& m, const SweepRow& r) {
    return m.policy == r.policy && m.energy_threshold_j == r.energy_threshold_j && m.bandwidth_bps == r.bandwidth_bps;
  };
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const MedianRow& m) { return same(m, r); });
    if (it == out.end()) {
      MedianRow m;
      m.policy = r.policy;
      m.energy_threshold_j = r.energy_threshold_j;
      m.bandwidth_bps = r.bandwidth_bps;
      out.push_back(m);
      it = out.end() - 1;
    }
    if (r.status != "ok") continue;
    auto& g = groups[static_cast<std::size_t>(it - out.begin())];
    g.first.push_back(r.recall);
    g.second.push_back(r.e_total_j);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& g = groups[i];
    out[i].runs = g.first.size();
    out[i].recall = g.first.empty() ? std::nan("") : percentile(g.first, 50.0);
    out[i].e_total_j = g.second.empty() ? std::nan("") : percentile(g.second, 50.0);
  }
  return out;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& cell = rows.at(row).at(column(name));
  if (cell == "nan") return std::nan("");
  return to_double(name, cell);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(l);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw Error("empty CSV: " + path.string());
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw Error("ragged CSV row in " + path.string());
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_rounds_csv(const fs::path& path, const std::vector<RoundReport>& rounds) {
  auto out = open_out(path);
  out << "round,model_q_bits,plan_p_l,plan_q_l,plan_w,tau_th,uplinks,bits_up,bits_down,t_ul_s,t_dl_s,"
         "inferences,detections,true_positives,false_positives,fault_samples,e_comm_j,e_comp_j,e_total_j,"
         "recall,model_updated\n";
  for (const auto& r : rounds) {
    out << r.round << ',' << quant_bits(r.model_quant) << ',' << format_number(r.plan.prune_fraction) << ','
        << quant_bits(r.plan.quant) << ',' << r.plan.window << ',' << format_number(r.plan.tau) << ',' << r.uplinks
        << ',' << r.bits_up << ',' << r.bits_down << ',' << format_number(r.t_ul_s) << ','
        << format_number(r.t_dl_s) << ',' << r.inferences << ',' << r.detections << ',' << r.true_positives << ','
        << r.false_positives << ',' << r.fault_samples << ',' << format_number(r.e_comm_j) << ','
        << format_number(r.e_comp_j) << ',' << format_number(r.e_total_j) << ',' << format_number(r.recall) << ','
        << (r.model_updated ? 1 : 0) << '\n';
  }
}

void write_ledger_csv(const fs::path& path, const EnergyLedger& ledger) {
  auto out = open_out(path);
  out << "round,e_comm_j,e_comp_j,e_total_j\n";
  for (const auto& r : ledger.records()) {
    out << r.round << ',' << format_number(r.comm_j) << ',' << format_number(r.comp_j) << ','
        << format_number(r.total_j) << '\n';
  }
}

void write_metrics_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  auto out = open_out(path);
  out << "policy,e_th_j,bandwidth_bps,seed,recall,e_total_j,rounds\n";
  for (const auto& r : rows) {
    out << to_string(r.policy) << ',' << format_number(r.energy_threshold_j) << ',' << format_number(r.bandwidth_bps)
        << ',' << r.seed << ',' << format_number(r.recall) << ',' << format_number(r.e_total_j) << ',' << r.rounds
        << '\n';
  }
}

void write_predictions_csv(const fs::path& path, const std::vector<PredictionRecord>& log) {
  auto out = open_out(path);
  out << "position,round,inferred,truth,predicted\n";
  for (const auto& p : log) {
    out << p.position << ',' << p.round << ',' << int(p.inferred) << ',' << int(p.truth) << ',' << int(p.predicted)
        << '\n';
  }
}

void write_sizes_csv(const fs::path& dir, const SizeCalibration& sizes) {
  {
    auto out = open_out(dir / "sizes_downlink.csv");
    out << "P_L,Q_L,raw_bits,coded_bits\n";
    for (const auto& p : sizes.downlink_points) {
      out << format_number(p.prune_fraction) << ',' << quant_bits(p.quant) << ',' << p.raw_bits << ','
          << p.coded_bits << '\n';
    }
  }
  {
    auto out = open_out(dir / "sizes_uplink.csv");
    out << "W,samples,raw_bits,coded_bits\n";
    for (const auto& p : sizes.uplink_points) {
      out << p.window << ',' << p.samples << ',' << p.raw_bits << ',' << p.coded_bits << '\n';
    }
  }
  auto out = open_out(dir / "size_models.csv");
  out << "model,slope,intercept,residual_max,header_bits,pruning_threshold\n";
  auto row = [&](const char* name, const SizeModel& m) {
    out << name << ',' << format_number(m.slope) << ',' << format_number(m.intercept) << ','
        << format_number(m.residual_max) << ',' << sizes.header_bits << ',' << format_number(sizes.pruning_threshold)
        << '\n';
  };
  row("downlink_q8", sizes.downlink.q8);
  row("downlink_q32", sizes.downlink.q32);
  row("uplink", sizes.uplink);
}

void write_roc_csv(const fs::path& dir, const std::vector<RocResult>& results) {
  {
    auto out = open_out(dir / "roc.csv");
    out << "detector,tau,fpr,tpr\n";
    std::vector<double> grid;
    for (const auto& r : results) {
      for (const auto& p : r.choice.curve) {
        out << r.detector << ',' << format_number(p.tau) << ',' << format_number(p.fpr) << ','
            << format_number(p.tpr) << '\n';
        if (&r == &results.front()) grid.push_back(p.tau);
      }
    }
    // Reference classifier that flags a sample with probability 1 - tau.
    for (double tau : grid) {
      out << "random," << format_number(tau) << ',' << format_number(1.0 - tau) << ',' << format_number(1.0 - tau)
          << '\n';
    }
  }
  auto out = open_out(dir / "roc_summary.csv");
  out << "detector,auc,tau_star,objective,note\n";
  for (const auto& r : results) {
    out << r.detector << ',' << format_number(r.auc) << ',' << format_number(r.choice.tau) << ','
        << format_number(r.choice.objective) << ',' << (r.no_positives ? "no positives; default tau kept" : "")
        << '\n';
  }
  out << "random,0.5,,,\n";
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
  auto out = open_out(path);
  out << "policy,e_th_j,bandwidth_bps,seed,recall,e_total_j,rounds,status\n";
  for (const auto& r : rows) {
    out << to_string(r.policy) << ',' << format_number(r.energy_threshold_j) << ',' << format_number(r.bandwidth_bps)
        << ',' << r.seed << ',' << format_number(r.recall) << ',' << format_number(r.e_total_j) << ',' << r.rounds
        << ',' << clean_cell(r.status) << '\n';
  }
}

void write_medians_csv(const fs::path& path, const std::vector<MedianRow>& rows) {
  auto out = open_out(path);
  out << "policy,e_th_j,bandwidth_bps,runs,median_recall,median_e_total_j\n";
  for (const auto& r : rows) {
    out << to_string(r.policy) << ',' << format_number(r.energy_threshold_j) << ',' << format_number(r.bandwidth_bps)
        << ',' << r.runs << ',' << format_number(r.recall) << ',' << format_number(r.e_total_j) << '\n';
  }
}

int cmd_calibrate_sizes(const ExperimentConfig& config) {
  config.validate();
  const SeedContext ctx = make_seed_context(config, config.detector, config.seed);
  write_sizes_csv(config.out, ctx.sizes);
  std::cout << "downlink q32: " << format_number(ctx.sizes.downlink.q32.slope) << " * P + "
            << format_number(ctx.sizes.downlink.q32.intercept) << " bits\n"
            << "downlink q8:  " << format_number(ctx.sizes.downlink.q8.slope) << " * P + "
            << format_number(ctx.sizes.downlink.q8.intercept) << " bits\n"
            << "uplink:       " << format_number(ctx.sizes.uplink.slope) << " * W + "
            << format_number(ctx.sizes.uplink.intercept) << " bits\n"
            << "P_th = " << format_number(ctx.sizes.pruning_threshold) << '\n';
  return 0;
}

int cmd_roc(const ExperimentConfig& config) {
  config.validate();
  std::vector<RocResult> results;
  for (Head h : {Head::kAutoencoder, Head::kClassifier}) {
    results.push_back(roc_dry_run(config, make_seed_context(config, h, config.seed)));
  }
  write_roc_csv(config.out, results);
  for (const auto& r : results) {
    std::cout << r.detector << ": auc " << format_number(r.auc) << ", tau* " << format_number(r.choice.tau)
              << (r.no_positives ? " (no positives; default kept)" : "") << '\n';
  }
  return 0;
}

int cmd_run(const ExperimentConfig& config) {
  config.validate();
  const SeedContext ctx = make_seed_context(config, config.detector, config.seed);
  const double tau = resolve_tau(config, ctx);
  std::unique_ptr<SocketTransport> socket;
  if (!config.socket.empty()) {
    const auto [host, port] = parse_endpoint(config.socket);
    socket = SocketTransport::open(host, port, config.header_bits);
  }
  const RunResult r =
      run_with_context(config, ctx, config.policy, config.energy_threshold, config.bandwidth, tau, socket.get());
  const fs::path dir = config.out;
  write_rounds_csv(dir / "rounds.csv", r.rounds);
  write_ledger_csv(dir / "ledger.csv", r.ledger);
  write_predictions_csv(dir / "predictions.csv", r.predictions);
  SweepRow m;
  m.policy = config.policy;
  m.energy_threshold_j = config.energy_threshold;
  m.bandwidth_bps = config.bandwidth;
  m.seed = config.seed;
  m.recall = r.recall;
  m.e_total_j = r.ledger.total_j();
  m.rounds = r.updates;
  write_metrics_csv(dir / "metrics.csv", {m});
  std::cout << to_string(config.policy) << ": recall " << format_number(r.recall) << ", E_total "
            << format_number(r.ledger.total_j()) << " J, rounds " << r.updates << ", tau " << format_number(tau)
            << '\n';
  return 0;
}

int cmd_sweep(const ExperimentConfig& config, SweepAxis axis) {
  config.validate();
  double tau = 0.0;
  if (config.tau) {
    tau = *config.tau;
  } else {
    tau = resolve_tau(config, make_seed_context(config, config.detector, config.seeds.front()));
  }
  const auto rows = run_sweep(config, axis, tau);
  const fs::path dir = config.out;
  const std::string name = "sweep_" + to_string(axis);
  write_sweep_csv(dir / (name + ".csv"), rows);
  write_medians_csv(dir / (name + "_median.csv"), sweep_medians(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status != "ok";
  std::cout << rows.size() << " runs, tau " << format_number(tau) << ", " << failed << " failed\n";
  return failed ? 1 : 0;
}

}  // namespace acord
