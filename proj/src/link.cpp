#include "acord/link.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

namespace acord {

void LinkEstimate::update(double bits, double elapsed_s, int round) {
  const double rate = estimate_rate(bits, elapsed_s);
  uplink_bps = rate;
  downlink_bps = rate;
  last_measured_round = round;
}

double LinkConfig::bandwidth_for_round(int round) const {
  if (schedule_bps.empty()) return bandwidth_bps;
  const auto i = static_cast<std::size_t>(std::max(round - 1, 0));
  return schedule_bps[std::min(i, schedule_bps.size() - 1)];
}

double transmission_time(double bits, double rate_bps) {
  if (!(rate_bps > 0.0)) throw Error("transmission rate must be positive");
  if (bits < 0.0) throw Error("bit count must be non-negative");
  return bits / rate_bps;
}

double estimate_rate(double bits, double elapsed_s) {
  if (!(elapsed_s > 0.0)) throw Error("cannot estimate a rate from zero elapsed time");
  return bits / elapsed_s;
}

SimulatedTransport::SimulatedTransport(LinkConfig config) : config_(std::move(config)) {
  if (!(config_.bandwidth_bps > 0.0)) throw Error("link bandwidth must be positive");
  for (double b : config_.schedule_bps) {
    if (!(b > 0.0)) throw Error("scheduled bandwidth must be positive");
  }
  if (config_.header_bits < 0) throw Error("header bits must be non-negative");
}

Delivery SimulatedTransport::send(Direction, PayloadKind, std::span<const std::uint8_t> payload,
                                  double max_elapsed_s) {
  if (payload.size() > kMaxFramePayload) throw Error("oversize frame");
  const double bits = static_cast<double>(config_.header_bits) + 8.0 * static_cast<double>(payload.size());
  const double full = transmission_time(bits, current_bandwidth_bps());
  Delivery d;
  if (full > max_elapsed_s) {
    d.elapsed_s = std::max(max_elapsed_s, 0.0);
    d.completed = false;
  } else {
    d.elapsed_s = full;
    d.bytes = payload.size();
    d.payload.assign(payload.begin(), payload.end());
  }
  clock_s_ += d.elapsed_s;
  return d;
}

Bytes encode_frame(PayloadKind kind, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxFramePayload) throw Error("oversize frame");
  Bytes out;
  out.reserve(payload.size() + 5);
  out.push_back(static_cast<std::uint8_t>(kind));
  const auto n = static_cast<std::uint32_t>(payload.size());
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

namespace {

PayloadKind kind_from_byte(std::uint8_t b) {
  if (b == static_cast<std::uint8_t>(PayloadKind::kData)) return PayloadKind::kData;
  if (b == static_cast<std::uint8_t>(PayloadKind::kModel)) return PayloadKind::kModel;
  throw Error("unknown frame kind " + std::to_string(b));
}

std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("connection lost while sending: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

void read_all(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, data, n, 0);
    if (r == 0) throw Error("connection lost while receiving");
    if (r < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("connection lost while receiving: ") + std::strerror(errno));
    }
    data += r;
    n -= static_cast<std::size_t>(r);
  }
}

Frame read_frame(int fd) {
  std::uint8_t head[5];
  read_all(fd, head, 5);
  Frame f;
  f.kind = kind_from_byte(head[0]);
  f.payload.resize(be32(head + 1));
  if (!f.payload.empty()) read_all(fd, f.payload.data(), f.payload.size());
  return f;
}

}  // namespace

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5) throw Error("truncated frame header");
  const std::uint32_t n = be32(bytes.data() + 1);
  if (bytes.size() != 5 + static_cast<std::size_t>(n)) throw Error("frame length mismatch");
  Frame f;
  f.kind = kind_from_byte(bytes[0]);
  f.payload.assign(bytes.begin() + 5, bytes.end());
  return f;
}

std::unique_ptr<SocketTransport> SocketTransport::open(const std::string& host, int port, std::int64_t header_bits) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error("cannot resolve socket host " + host);
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));

  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw Error("cannot create socket");
  const int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listener, 1) != 0) {
    ::close(listener);
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  const int bound_port = ntohs(addr.sin_port);

  const int device = ::socket(AF_INET, SOCK_STREAM, 0);
  if (device < 0 || ::connect(device, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    if (device >= 0) ::close(device);
    ::close(listener);
    throw Error("cannot connect to " + host + ":" + std::to_string(bound_port));
  }
  const int server = ::accept(listener, nullptr, nullptr);
  ::close(listener);
  if (server < 0) {
    ::close(device);
    throw Error("accept failed");
  }
  ::setsockopt(device, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  ::setsockopt(server, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return std::unique_ptr<SocketTransport>(new SocketTransport(device, server, bound_port, header_bits));
}

SocketTransport::SocketTransport(int device_fd, int server_fd, int port, std::int64_t header_bits)
    : device_fd_(device_fd), server_fd_(server_fd), port_(port), header_bits_(header_bits) {}

SocketTransport::~SocketTransport() {
  if (device_fd_ >= 0) ::close(device_fd_);
  if (server_fd_ >= 0) ::close(server_fd_);
}

Delivery SocketTransport::send(Direction dir, PayloadKind kind, std::span<const std::uint8_t> payload, double) {
  const Bytes frame = encode_frame(kind, payload);
  const int tx = dir == Direction::kUplink ? device_fd_ : server_fd_;
  const int rx = dir == Direction::kUplink ? server_fd_ : device_fd_;

  const auto start = std::chrono::steady_clock::now();
  std::exception_ptr write_error;
  std::thread writer([&] {
    try {
      write_all(tx, frame.data(), frame.size());
    } catch (...) {
      write_error = std::current_exception();
    }
  });
  Frame received;
  std::exception_ptr read_error;
  try {
    received = read_frame(rx);
  } catch (...) {
    read_error = std::current_exception();
    ::shutdown(rx, SHUT_RDWR);  // unblocks the writer
  }
  writer.join();
  const auto stop = std::chrono::steady_clock::now();
  if (write_error) std::rethrow_exception(write_error);
  if (read_error) std::rethrow_exception(read_error);
  if (received.kind != kind) throw Error("frame kind changed in transit");

  Delivery d;
  d.elapsed_s = std::max(std::chrono::duration<double>(stop - start).count(), 1e-9);
  d.bytes = received.payload.size();
  d.payload = std::move(received.payload);
  return d;
}

}  // namespace acord
