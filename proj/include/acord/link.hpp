#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "acord/common.hpp"
#include "acord/compression.hpp"

namespace acord {

enum class Direction : std::uint8_t { kUplink, kDownlink };

/// Throughput measured on the latest uplink, reused for the downlink.
struct LinkEstimate {
  double uplink_bps = 1e6;
  double downlink_bps = 1e6;
  int last_measured_round = -1;

  /// Records an uplink measurement; both directions take the new rate.
  void update(double bits, double elapsed_s, int round);
};

struct LinkConfig {
  double bandwidth_bps = 1e6;
  /// Optional per-round bandwidth, first entry for round 1; rounds past the end reuse the last entry.
  std::vector<double> schedule_bps;
  std::int64_t header_bits = 512;

  double bandwidth_for_round(int round) const;
};

struct Delivery {
  double elapsed_s = 0.0;
  std::size_t bytes = 0;
  bool completed = true;
  Bytes payload;  // as received; empty when the transfer was cut off
};

/// bits / rate.
double transmission_time(double bits, double rate_bps);
/// bits / elapsed.
double estimate_rate(double bits, double elapsed_s);

class Transport {
 public:
  virtual ~Transport() = default;

  /// Moves one framed payload. A transfer that would take longer than
  /// `max_elapsed_s` is cut off at that time and reported incomplete.
  virtual Delivery send(Direction dir, PayloadKind kind, std::span<const std::uint8_t> payload,
                        double max_elapsed_s = kInfinity) = 0;

  /// Called when a new protocol round starts.
  virtual void begin_round(int round) { (void)round; }

  /// Protocol overhead counted on top of the payload for every message.
  virtual std::int64_t header_bits() const = 0;
};

/// Bandwidth-limited reliable link on a virtual clock.
class SimulatedTransport final : public Transport {
 public:
  explicit SimulatedTransport(LinkConfig config);

  Delivery send(Direction dir, PayloadKind kind, std::span<const std::uint8_t> payload,
                double max_elapsed_s = kInfinity) override;
  void begin_round(int round) override { round_ = round; }
  std::int64_t header_bits() const override { return config_.header_bits; }

  double clock_s() const { return clock_s_; }
  double current_bandwidth_bps() const { return config_.bandwidth_for_round(round_); }

 private:
  LinkConfig config_;
  double clock_s_ = 0.0;
  int round_ = 0;
};

/// [kind:1][length:4 big-endian][payload].
Bytes encode_frame(PayloadKind kind, std::span<const std::uint8_t> payload);

struct Frame {
  PayloadKind kind = PayloadKind::kData;
  Bytes payload;
};
/// Decodes exactly one frame occupying all of `bytes`.
Frame decode_frame(std::span<const std::uint8_t> bytes);

constexpr std::size_t kMaxFramePayload = std::size_t{1} << 31;

/// Framed TCP transport. Both endpoints live in this process: the device end
/// connects to a listener bound at host:port and the server end accepts it.
/// Elapsed time is measured on the wall clock.
class SocketTransport final : public Transport {
 public:
  /// Port 0 picks an ephemeral port.
  static std::unique_ptr<SocketTransport> open(const std::string& host, int port, std::int64_t header_bits = 512);
  ~SocketTransport() override;

  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  Delivery send(Direction dir, PayloadKind kind, std::span<const std::uint8_t> payload,
                double max_elapsed_s = kInfinity) override;
  std::int64_t header_bits() const override { return header_bits_; }
  int port() const { return port_; }

 private:
  SocketTransport(int device_fd, int server_fd, int port, std::int64_t header_bits);

  int device_fd_ = -1;
  int server_fd_ = -1;
  int port_ = 0;
  std::int64_t header_bits_ = 512;
};

}  // namespace acord
