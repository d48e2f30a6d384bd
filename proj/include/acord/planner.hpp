#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "acord/common.hpp"
#include "acord/compression.hpp"
#include "acord/energy.hpp"
#include "acord/link.hpp"

namespace acord {

/// Decision variables of one round.
struct Plan {
  double prune_fraction = 0.0;
  QuantLevel quant = QuantLevel::k32;
  int window = 200;
  double tau = 0.5;

  friend bool operator==(const Plan&, const Plan&) = default;
};

struct DownlinkSizeModels {
  SizeModel q8;
  SizeModel q32;

  const SizeModel& at(QuantLevel q) const { return q == QuantLevel::k8 ? q8 : q32; }
};

struct PlanInputs {
  double budget_j = 60.0;
  /// Projected inference energy over the whole horizon.
  double compute_energy_estimate_j = 0.0;
  double reference_energy_j = 60.0;
  double reference_rate_bps = 1e6;
  LinkEstimate estimate;
  DownlinkSizeModels downlink;
  SizeModel uplink;  // bits as a function of W
  int max_window = 200;
  double pruning_threshold = 1.0;
};

struct TargetLatencies {
  double downlink_s = 0.0;
  double uplink_s = 0.0;
};

/// Reference transfer times (uncompressed model, widest window, reference rate)
/// scaled by the share of the budget left after computation.
TargetLatencies target_latencies(const PlanInputs& in);

struct DownlinkChoice {
  double prune_fraction = 0.0;
  QuantLevel quant = QuantLevel::k32;
  /// False when even the clamped choice exceeds the target size.
  bool feasible = true;
};

/// Pruning fraction at which the fitted size line meets `target_bits`, clamped to [0, 1].
double solve_pruning(const SizeModel& model, double target_bits);

/// Least pruning that meets t_DL* under 32 bits, switching to 8 bits once that
/// pruning would exceed the threshold.
DownlinkChoice plan_downlink(const PlanInputs& in, double target_downlink_s);

/// Widest context window whose fitted uplink size fits in t_UL*, clamped to [0, W_max].
int plan_uplink(const PlanInputs& in, double target_uplink_s);

/// Pruning fraction at which the 32-bit size line equals the unpruned 8-bit size.
double pruning_threshold(const SizeModel& q32, const SizeModel& q8);

/// Full planner pass for one round. tau is clamped to [0, 1].
Plan plan_round(const PlanInputs& in, double tau);

struct ScoredLabel {
  double score = 0.0;
  int label = 0;
};

struct RocPoint {
  double tau = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct ThresholdChoice {
  double tau = 0.5;
  double objective = 0.0;
  std::vector<RocPoint> curve;
};

/// Raised when a scored set has no positive labels, so TPR is undefined.
class NoPositivesError : public Error {
 public:
  using Error::Error;
};

/// {0, step, 2 step, ..., 1}.
std::vector<double> threshold_grid(double step = 0.1);

/// FPR and TPR of the rule score > tau.
RocPoint roc_point(std::span<const ScoredLabel> scored, double tau);

/// Grid point minimizing FPR^2 + (1 - TPR)^2; ties go to the larger tau.
ThresholdChoice roc_threshold(std::span<const ScoredLabel> scored, double grid_step = 0.1);
ThresholdChoice select_threshold(std::vector<RocPoint> curve);

/// Trapezoidal area under the curve closed with (0, 0) and (1, 1).
double roc_auc(std::span<const RocPoint> curve);

/// Cost of one event under a fixed plan.
struct EventCost {
  double uplink_bits = 0.0;
  double downlink_bits = 0.0;
  double rate_bps = 1e6;
};

double event_energy(const EventCost& cost, const EnergyParams& params);

struct PeriodicSchedule {
  std::size_t period = 1;
  std::size_t events = 0;
  double projected_j = 0.0;
  double event_j = 0.0;
};

/// Smallest sampling period whose projected total energy fits the budget (bisection).
PeriodicSchedule periodic_schedule(double budget_j, std::size_t horizon, double event_j, double compute_j = 0.0);

struct BaselinePolicy {
  Policy kind = Policy::kHawk;
  Plan plan;
  PeriodicSchedule schedule;  // periodic only
};

/// Fixed-plan baselines: HAWK (P=0, Q=32, W=200) and PERIODIC (W=200 on a fixed schedule).
BaselinePolicy baseline_policy(Policy kind, double budget_j, std::size_t horizon, const EventCost& cost,
                               const EnergyParams& params, double tau = 0.5, int window = 200);

}  // namespace acord
