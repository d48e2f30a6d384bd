#include "acord/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "acord/common.hpp"
#include "acord/rng.hpp"

namespace acord {

void Trace::push_back(std::size_t index, std::span<const double> features, int label) {
  if (features.size() != feature_count_) {
    throw Error("sample has " + std::to_string(features.size()) + " features, trace expects " +
                std::to_string(feature_count_));
  }
  if (label != 0 && label != 1) throw Error("label must be 0 or 1");
  if (!indices_.empty() && index <= indices_.back()) {
    throw Error("sample indices must be strictly increasing");
  }
  data_.insert(data_.end(), features.begin(), features.end());
  labels_.push_back(label);
  indices_.push_back(index);
}

Sample Trace::sample(std::size_t pos) const {
  auto f = features(pos);
  return Sample{indices_[pos], std::vector<double>(f.begin(), f.end()), labels_[pos]};
}

std::vector<std::size_t> Trace::fault_event_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == 1) out.push_back(i);
  }
  return out;
}

std::size_t Trace::fault_count() const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), 1));
}

Trace Trace::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw Error("slice out of range");
  Trace out(feature_count_);
  out.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(begin * feature_count_),
                   data_.begin() + static_cast<std::ptrdiff_t>(end * feature_count_));
  out.labels_.assign(labels_.begin() + static_cast<std::ptrdiff_t>(begin),
                     labels_.begin() + static_cast<std::ptrdiff_t>(end));
  out.indices_.assign(indices_.begin() + static_cast<std::ptrdiff_t>(begin),
                      indices_.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

std::size_t split_boundary(const Trace& trace, const SplitSpec& spec) {
  if (trace.empty()) throw Error("cannot split an empty trace");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error("train_fraction must lie in (0, 1)");
  }
  auto boundary = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(trace.size())));
  if (spec.faults_to_test) {
    for (std::size_t i = 0; i < boundary; ++i) {
      if (trace.label(i) == 1) {
        boundary = i;
        break;
      }
    }
  }
  if (boundary == 0) {
    throw Error("split leaves the train part empty (fault at the first sample or trace too short)");
  }
  return boundary;
}

std::pair<Trace, Trace> split_initial(const Trace& trace, const SplitSpec& spec) {
  const std::size_t boundary = split_boundary(trace, spec);
  return {trace.slice(0, boundary), trace.slice(boundary, trace.size())};
}

MinMaxScaler MinMaxScaler::fit(const Trace& trace) {
  if (trace.empty()) throw Error("cannot fit a scaler on an empty trace");
  MinMaxScaler s;
  const std::size_t n = trace.feature_count();
  s.lo_.assign(n, kInfinity);
  s.hi_.assign(n, -kInfinity);
  for (std::size_t p = 0; p < trace.size(); ++p) {
    auto f = trace.features(p);
    for (std::size_t j = 0; j < n; ++j) {
      s.lo_[j] = std::min(s.lo_[j], f[j]);
      s.hi_[j] = std::max(s.hi_[j], f[j]);
    }
  }
  return s;
}

void MinMaxScaler::apply(Trace& trace) const {
  if (trace.feature_count() != lo_.size()) throw Error("scaler dimension mismatch");
  for (std::size_t p = 0; p < trace.size(); ++p) {
    auto f = trace.features(p);
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double range = hi_[j] - lo_[j];
      f[j] = range > 0.0 ? (f[j] - lo_[j]) / range : 0.0;
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::optional<double> parse_real(const std::string& s) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first == last) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

}  // namespace

Trace load_trace(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error("dataset has zero rows: " + path.string());
  const auto header = split_csv_line(line);

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("schema column absent from dataset: " + name);
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t status_col = column_of(schema.status_column);
  std::vector<std::size_t> feature_cols;
  if (!schema.feature_columns.empty()) {
    for (const auto& name : schema.feature_columns) feature_cols.push_back(column_of(name));
  } else {
    for (std::size_t c = 0; c < header.size(); ++c) {
      const auto& name = header[c];
      if (name.rfind(schema.feature_prefix, 0) != 0) continue;
      if (std::find(schema.exclude_columns.begin(), schema.exclude_columns.end(), name) !=
          schema.exclude_columns.end()) {
        continue;
      }
      feature_cols.push_back(c);
    }
  }
  if (feature_cols.empty()) throw Error("schema selects zero feature columns");

  std::vector<std::vector<std::optional<double>>> raw(feature_cols.size());
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() <= status_col) throw Error("row " + std::to_string(labels.size() + 1) + " is truncated");
    const auto& status = fields[status_col];
    if (status == "BROKEN") {
      labels.push_back(1);
    } else if (status == "NORMAL" || status == "RECOVERING") {
      labels.push_back(0);
    } else {
      throw Error("unknown machine status '" + status + "' in row " + std::to_string(labels.size() + 1));
    }
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const std::size_t c = feature_cols[j];
      raw[j].push_back(c < fields.size() ? parse_real(fields[c]) : std::nullopt);
    }
  }
  if (labels.empty()) throw Error("dataset has zero rows: " + path.string());

  // Columns without a single parseable value carry no information.
  std::vector<std::vector<double>> columns;
  for (auto& col : raw) {
    std::vector<double> valid;
    for (const auto& v : col) {
      if (v) valid.push_back(*v);
    }
    if (valid.empty()) continue;
    double last = median(std::move(valid));
    std::vector<double> filled;
    filled.reserve(col.size());
    for (const auto& v : col) {
      if (v) last = *v;
      filled.push_back(last);
    }
    columns.push_back(std::move(filled));
  }
  if (columns.empty()) throw Error("dataset has zero usable feature columns");

  Trace trace(columns.size());
  std::vector<double> row(columns.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) row[j] = columns[j][r];
    trace.push_back(r, row, labels[r]);
  }

  // Scaling statistics come from the train prefix. A trace too short to have
  // one falls back to its own statistics.
  MinMaxScaler scaler;
  try {
    const std::size_t boundary = split_boundary(trace, {schema.train_fraction, true});
    scaler = MinMaxScaler::fit(trace.slice(0, boundary));
  } catch (const Error&) {
    scaler = MinMaxScaler::fit(trace);
  }
  scaler.apply(trace);
  return trace;
}

Trace synth_trace(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.length == 0) throw Error("synthetic trace length must be positive");
  if (cfg.feature_count == 0) throw Error("synthetic trace needs at least one feature");
  if (cfg.coherence_length == 0) throw Error("coherence length must be positive");
  if (cfg.latent_dim == 0) throw Error("latent dimension must be positive");
  if (cfg.fault_events * cfg.coherence_length > cfg.length) {
    throw Error("fault events times coherence length exceeds trace length");
  }
  const std::size_t n = cfg.feature_count;
  const std::size_t k = cfg.latent_dim;
  const std::size_t width = cfg.coherence_length;
  const auto precursor = static_cast<std::size_t>(std::lround(cfg.precursor_fraction * static_cast<double>(width)));
  const auto start = static_cast<std::size_t>(std::ceil(cfg.fault_start_fraction * static_cast<double>(cfg.length)));
  if (cfg.fault_events > 0 && (start >= cfg.length ||
                               cfg.fault_events * (width + precursor) > cfg.length - start)) {
    throw Error("fault events do not fit in the trace after the fault start offset");
  }

  Rng rng(seed);
  std::vector<double> mixing(n * k);
  for (auto& a : mixing) a = rng.normal() / std::sqrt(static_cast<double>(k));
  std::vector<double> offset(n);
  for (auto& m : offset) m = rng.uniform(-1.0, 1.0);
  std::vector<double> drift(n);
  for (auto& d : drift) d = cfg.drift * rng.normal();

  // Fault placement: one event per equal segment of the usable region.
  struct Event {
    std::size_t begin;
    std::vector<double> shift;
  };
  std::vector<Event> events;
  if (cfg.fault_events > 0) {
    const std::size_t seg = (cfg.length - start) / cfg.fault_events;
    for (std::size_t e = 0; e < cfg.fault_events; ++e) {
      const std::size_t lo = start + e * seg + precursor;
      const std::size_t span = seg - width - precursor + 1;
      Event ev{lo + static_cast<std::size_t>(rng.below(span)), std::vector<double>(n, 0.0)};
      // A fault disturbs a random subset of roughly a fifth of the sensors.
      for (std::size_t j = 0; j < n; ++j) {
        if (rng.uniform() < 0.2) ev.shift[j] = cfg.fault_shift * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      }
      ev.shift[rng.below(n)] = cfg.fault_shift;
      events.push_back(std::move(ev));
    }
  }

  const double phi = std::exp(-1.0 / static_cast<double>(cfg.coherence_length));
  const double innovation = std::sqrt(1.0 - phi * phi);
  std::vector<double> latent(k);
  for (auto& z : latent) z = rng.normal();

  Trace trace(n);
  std::vector<double> x(n);
  std::size_t next_event = 0;
  for (std::size_t t = 0; t < cfg.length; ++t) {
    for (auto& z : latent) z = phi * z + innovation * rng.normal();
    const double progress = static_cast<double>(t) / static_cast<double>(cfg.length);
    for (std::size_t j = 0; j < n; ++j) {
      double v = offset[j] + progress * drift[j];
      for (std::size_t q = 0; q < k; ++q) v += mixing[j * k + q] * latent[q];
      x[j] = v + cfg.noise_scale * rng.normal();
    }

    int label = 0;
    while (next_event < events.size() && t >= events[next_event].begin + width) ++next_event;
    if (next_event < events.size()) {
      const auto& ev = events[next_event];
      double weight = 0.0;
      if (t >= ev.begin) {
        weight = 1.0;
        label = 1;
      } else if (precursor > 0 && t + precursor >= ev.begin) {
        weight = 0.5 * static_cast<double>(t + precursor + 1 - ev.begin) / static_cast<double>(precursor + 1);
      }
      if (weight > 0.0) {
        for (std::size_t j = 0; j < n; ++j) x[j] += weight * ev.shift[j];
      }
    }
    trace.push_back(t, x, label);
  }
  return trace;
}

}  // namespace acord
