#include "acord/energy.hpp"

#include <cmath>

namespace acord {

double EnergyParams::inference_energy(QuantLevel q) const {
  switch (q) {
    case QuantLevel::k8:
      return inference_j_q8;
    case QuantLevel::k32:
      return inference_j_q32;
  }
  throw Error("unknown quantization level");
}

void EnergyParams::validate() const {
  if (!(tx_power_w > 0 && rx_power_w > 0 && inference_j_q8 > 0 && inference_j_q32 > 0)) {
    throw Error("power and inference energy constants must be positive");
  }
  if (!(budget_j >= 0)) throw Error("energy budget must be non-negative");
  if (!(reference_rate_bps > 0 && reference_energy_j > 0)) throw Error("reference rate and energy must be positive");
}

double comm_energy(double t_ul_s, double t_dl_s, const EnergyParams& params) {
  if (t_ul_s < 0.0 || t_dl_s < 0.0) throw Error("transmission times must be non-negative");
  return t_ul_s * params.tx_power_w + t_dl_s * params.rx_power_w;
}

double comp_energy(std::int64_t inference_count, QuantLevel q, const EnergyParams& params) {
  if (inference_count < 0) throw Error("inference count must be non-negative");
  return params.inference_energy(q) * static_cast<double>(inference_count);
}

void EnergyLedger::accrue_round(double comm_j, double comp_j) {
  if (!(comm_j >= 0.0) || !(comp_j >= 0.0)) throw Error("round energies must be non-negative");
  total_j_ += comm_j + comp_j;
  records_.push_back(EnergyRecord{static_cast<int>(records_.size()) + 1, comm_j, comp_j, total_j_});
}

}  // namespace acord
