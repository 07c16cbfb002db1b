#pragma once

// Reliable, per-pair FIFO message transports. Both implementations carry
// encoded wire frames, so the in-process path exercises the same codec as the
// socket path.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "cdsgd/protocol.hpp"

namespace cdsgd {

class Endpoint {
 public:
  virtual ~Endpoint() = default;

  /// Throws DisconnectError if the peer has closed.
  virtual void send(const Message& msg) = 0;
  /// Blocks up to `timeout`; nullopt on timeout. Throws DisconnectError once
  /// the peer has closed and no buffered message remains.
  virtual std::optional<Message> recv(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;

  /// Like recv but converts a timeout into TimeoutError.
  Message recv_or_throw(std::chrono::milliseconds timeout);
};

/// Two connected in-process endpoints (first, second).
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> make_inprocess_pair();

struct SocketAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// Parses "host:port"; "localhost" maps to 127.0.0.1.
SocketAddress parse_address(const std::string& text);
std::string to_string(const SocketAddress& addr);

/// Frames are a u32 little-endian length followed by an encoded message.
class SocketEndpoint final : public Endpoint {
 public:
  explicit SocketEndpoint(int fd);
  ~SocketEndpoint() override;
  SocketEndpoint(const SocketEndpoint&) = delete;
  SocketEndpoint& operator=(const SocketEndpoint&) = delete;

  void send(const Message& msg) override;
  std::optional<Message> recv(std::chrono::milliseconds timeout) override;
  void close() override;

 private:
  bool read_exact(std::uint8_t* dst, std::size_t n, std::chrono::milliseconds timeout,
                  bool at_frame_start);
  int fd_;
};

class SocketListener {
 public:
  explicit SocketListener(const SocketAddress& addr);
  ~SocketListener();
  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  /// Actual bound port (useful when binding port 0).
  std::uint16_t port() const noexcept { return port_; }
  std::unique_ptr<SocketEndpoint> accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Retries until the listener accepts or `timeout` elapses.
std::unique_ptr<SocketEndpoint> connect_socket(const SocketAddress& addr,
                                               std::chrono::milliseconds timeout);

}  // namespace cdsgd
