#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace acord {

/// Raised for every contract violation and runtime failure inside the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bit width of weights and activations after post-training quantization.
enum class QuantLevel : std::uint8_t { k8 = 8, k32 = 32 };

constexpr int quant_bits(QuantLevel q) { return static_cast<int>(q); }

inline QuantLevel quant_level_from_bits(int bits) {
  if (bits == 8) return QuantLevel::k8;
  if (bits == 32) return QuantLevel::k32;
  throw Error("unsupported quantization level: " + std::to_string(bits));
}

/// Which protocol drives the device: the adaptive scheme or one of the two baselines.
enum class Policy : std::uint8_t { kAcord, kHawk, kPeriodic };

std::string to_string(Policy p);
Policy policy_from_string(const std::string& name);

constexpr double kInfinity = std::numeric_limits<double>::infinity();

}  // namespace acord
