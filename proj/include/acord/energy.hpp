#pragma once

#include <cstdint>
#include <vector>

#include "acord/common.hpp"

namespace acord {

/// Device power and per-inference energy constants (ESP32-class defaults).
struct EnergyParams {
  double tx_power_w = 0.79;
  double rx_power_w = 0.33;
  double inference_j_q8 = 1.4e-6;
  double inference_j_q32 = 6.6e-6;
  double budget_j = 60.0;
  double reference_rate_bps = 1e6;
  double reference_energy_j = 60.0;

  double inference_energy(QuantLevel q) const;
  void validate() const;
};

/// t_UL * tx power + t_DL * rx power.
double comm_energy(double t_ul_s, double t_dl_s, const EnergyParams& params);
/// inference count * per-inference energy at the given precision.
double comp_energy(std::int64_t inference_count, QuantLevel q, const EnergyParams& params);

struct EnergyRecord {
  int round = 0;
  double comm_j = 0.0;
  double comp_j = 0.0;
  double total_j = 0.0;  // cumulative after this round
};

/// Running sum of per-round communication and computation energy against the budget.
class EnergyLedger {
 public:
  explicit EnergyLedger(double budget_j = kInfinity) : budget_j_(budget_j) {}

  void accrue_round(double comm_j, double comp_j);
  /// True iff total + projected exceeds the budget.
  bool would_exceed(double projected_j) const { return total_j_ + projected_j > budget_j_; }

  double total_j() const { return total_j_; }
  double budget_j() const { return budget_j_; }
  double remaining_j() const { return budget_j_ - total_j_; }
  const std::vector<EnergyRecord>& records() const { return records_; }

 private:
  double budget_j_;
  double total_j_ = 0.0;
  std::vector<EnergyRecord> records_;
};

}  // namespace acord
