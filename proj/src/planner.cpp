#include "acord/planner.hpp"

#include <algorithm>
#include <cmath>

namespace acord {

namespace {

bool degenerate(const SizeModel& m) { return std::abs(m.slope) < 1e-9 * std::max(1.0, std::abs(m.intercept)); }

}  // namespace

TargetLatencies target_latencies(const PlanInputs& in) {
  const double left = in.budget_j - in.compute_energy_estimate_j;
  if (!(in.compute_energy_estimate_j >= 0.0)) throw Error("projected compute energy must be non-negative");
  if (!(left > 0.0)) throw Error("energy budget is exhausted by computation alone");
  if (!(in.reference_energy_j > 0.0) || !(in.reference_rate_bps > 0.0)) {
    throw Error("reference energy and rate must be positive");
  }
  const double scale = left / in.reference_energy_j;
  const double tau_dl = in.downlink.q32.predict(0.0) / in.reference_rate_bps;
  const double tau_ul = in.uplink.predict(static_cast<double>(in.max_window)) / in.reference_rate_bps;
  return {tau_dl * scale, tau_ul * scale};
}

double solve_pruning(const SizeModel& model, double target_bits) {
  if (degenerate(model)) throw Error("downlink size is insensitive to pruning (degenerate slope)");
  const double p = (target_bits - model.intercept) / model.slope;
  if (std::isnan(p)) return 1.0;
  return std::clamp(p, 0.0, 1.0);
}

DownlinkChoice plan_downlink(const PlanInputs& in, double target_downlink_s) {
  const double target_bits = in.estimate.downlink_bps * target_downlink_s;
  DownlinkChoice c;
  const double p32 = solve_pruning(in.downlink.q32, target_bits);
  if (p32 <= in.pruning_threshold) {
    c.prune_fraction = p32;
    c.quant = QuantLevel::k32;
  } else {
    c.prune_fraction = solve_pruning(in.downlink.q8, target_bits);
    c.quant = QuantLevel::k8;
  }
  const SizeModel& m = in.downlink.at(c.quant);
  c.feasible = m.predict(c.prune_fraction) <= target_bits + m.residual_max;
  return c;
}

int plan_uplink(const PlanInputs& in, double target_uplink_s) {
  if (in.max_window < 1) throw Error("maximum context window must be at least 1");
  if (degenerate(in.uplink) || in.uplink.slope < 0.0) throw Error("uplink size model has a degenerate slope");
  const double target_bits = in.estimate.uplink_bps * target_uplink_s;
  const double w = std::floor((target_bits - in.uplink.intercept) / in.uplink.slope);
  return static_cast<int>(std::clamp(w, 0.0, static_cast<double>(in.max_window)));
}

double pruning_threshold(const SizeModel& q32, const SizeModel& q8) {
  return solve_pruning(q32, q8.predict(0.0));
}

Plan plan_round(const PlanInputs& in, double tau) {
  if (std::isnan(tau)) throw Error("decision threshold is NaN");
  const TargetLatencies t = target_latencies(in);
  const DownlinkChoice dl = plan_downlink(in, t.downlink_s);
  return Plan{dl.prune_fraction, dl.quant, plan_uplink(in, t.uplink_s), std::clamp(tau, 0.0, 1.0)};
}

std::vector<double> threshold_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw Error("threshold grid step must lie in (0, 1]");
  const auto n = static_cast<int>(std::lround(1.0 / step));
  std::vector<double> grid;
  const bool even = std::abs(n * step - 1.0) < 1e-12;
  for (int k = 0; k <= n; ++k) grid.push_back(even ? static_cast<double>(k) / n : std::min(1.0, k * step));
  if (grid.back() < 1.0) grid.push_back(1.0);
  return grid;
}

RocPoint roc_point(std::span<const ScoredLabel> scored, double tau) {
  std::size_t pos = 0, neg = 0, tp = 0, fp = 0;
  for (const auto& s : scored) {
    const bool flagged = s.score > tau;
    if (s.label == 1) {
      ++pos;
      tp += flagged;
    } else {
      ++neg;
      fp += flagged;
    }
  }
  RocPoint p;
  p.tau = tau;
  p.tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
  p.fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
  return p;
}

ThresholdChoice select_threshold(std::vector<RocPoint> curve) {
  if (curve.empty()) throw Error("cannot select a threshold from an empty curve");
  std::sort(curve.begin(), curve.end(), [](const RocPoint& a, const RocPoint& b) { return a.tau < b.tau; });
  ThresholdChoice best;
  best.objective = kInfinity;
  for (const auto& p : curve) {
    const double obj = p.fpr * p.fpr + (1.0 - p.tpr) * (1.0 - p.tpr);
    if (obj <= best.objective) {
      best.objective = obj;
      best.tau = p.tau;
    }
  }
  best.curve = std::move(curve);
  return best;
}

ThresholdChoice roc_threshold(std::span<const ScoredLabel> scored, double grid_step) {
  if (scored.empty()) throw Error("roc_threshold needs a non-empty scored set");
  if (std::none_of(scored.begin(), scored.end(), [](const ScoredLabel& s) { return s.label == 1; })) {
    throw NoPositivesError("no positive labels: true positive rate is undefined");
  }
  std::vector<RocPoint> curve;
  for (double tau : threshold_grid(grid_step)) curve.push_back(roc_point(scored, tau));
  return select_threshold(std::move(curve));
}

double roc_auc(std::span<const RocPoint> curve) {
  std::vector<std::pair<double, double>> pts = {{0.0, 0.0}, {1.0, 1.0}};
  for (const auto& p : curve) pts.emplace_back(p.fpr, p.tpr);
  std::sort(pts.begin(), pts.end());
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  }
  return area;
}

double event_energy(const EventCost& cost, const EnergyParams& params) {
  return comm_energy(transmission_time(cost.uplink_bits, cost.rate_bps),
                     transmission_time(cost.downlink_bits, cost.rate_bps), params);
}

PeriodicSchedule periodic_schedule(double budget_j, std::size_t horizon, double event_j, double compute_j) {
  if (horizon == 0) throw Error("periodic schedule needs a non-empty horizon");
  if (!(event_j > 0.0)) throw Error("event energy must be positive");
  auto projected = [&](std::size_t period) {
    return static_cast<double>(horizon / period) * event_j + compute_j;
  };
  if (projected(horizon) > budget_j) throw Error("infeasible budget: a single periodic event exceeds it");
  // projected() is non-increasing in the period.
  std::size_t lo = 1, hi = horizon;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (projected(mid) <= budget_j) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return PeriodicSchedule{lo, horizon / lo, projected(lo), event_j};
}

BaselinePolicy baseline_policy(Policy kind, double budget_j, std::size_t horizon, const EventCost& cost,
                               const EnergyParams& params, double tau, int window) {
  BaselinePolicy b;
  b.kind = kind;
  b.plan = Plan{0.0, QuantLevel::k32, window, tau};
  if (kind == Policy::kAcord) throw Error("ACORD is not a baseline policy");
  if (kind == Policy::kHawk) {
    // A budget below one event is not an error here: Hawk simply never updates.
    b.schedule.event_j = event_energy(cost, params);
    return b;
  }
  b.schedule = periodic_schedule(budget_j, horizon, event_energy(cost, params));
  return b;
}

}  // namespace acord
