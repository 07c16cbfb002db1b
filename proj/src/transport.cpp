#include "cdsgd/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

namespace cdsgd {

Message Endpoint::recv_or_throw(std::chrono::milliseconds timeout) {
  auto msg = recv(timeout);
  if (!msg) {
    throw TimeoutError("no message within " + std::to_string(timeout.count()) + " ms");
  }
  return std::move(*msg);
}

// ---------------------------------------------------------------------------
// In-process

namespace {

struct Channel {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> frames;
  bool closed = false;
};

class InProcessEndpoint final : public Endpoint {
 public:
  InProcessEndpoint(std::shared_ptr<Channel> out, std::shared_ptr<Channel> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  ~InProcessEndpoint() override { close(); }

  void send(const Message& msg) override {
    auto frame = encode_message(msg);
    {
      std::lock_guard lock(out_->mu);
      if (out_->closed) throw DisconnectError("peer endpoint closed");
      out_->frames.push_back(std::move(frame));
    }
    out_->cv.notify_one();
  }

  std::optional<Message> recv(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait_for(lock, timeout, [&] { return !in_->frames.empty() || in_->closed; });
    if (in_->frames.empty()) {
      if (in_->closed) throw DisconnectError("peer endpoint closed");
      return std::nullopt;
    }
    auto frame = std::move(in_->frames.front());
    in_->frames.pop_front();
    lock.unlock();
    return decode_message(frame);
  }

  void close() override {
    for (auto* ch : {out_.get(), in_.get()}) {
      {
        std::lock_guard lock(ch->mu);
        ch->closed = true;
      }
      ch->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<Channel> out_;
  std::shared_ptr<Channel> in_;
};

}  // namespace

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> make_inprocess_pair() {
  auto a_to_b = std::make_shared<Channel>();
  auto b_to_a = std::make_shared<Channel>();
  return {std::make_unique<InProcessEndpoint>(a_to_b, b_to_a),
          std::make_unique<InProcessEndpoint>(b_to_a, a_to_b)};
}

// ---------------------------------------------------------------------------
// Sockets

namespace {

constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

[[noreturn]] void throw_errno(const std::string& what) {
  throw Error(what + ": " + std::strerror(errno));
}

sockaddr_in to_sockaddr(const SocketAddress& addr) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(addr.port);
  if (::inet_pton(AF_INET, addr.host.c_str(), &sa.sin_addr) != 1) {
    throw ConfigError("not an IPv4 address: '" + addr.host + "'");
  }
  return sa;
}

bool wait_fd(int fd, short events, std::chrono::milliseconds timeout) {
  pollfd p{fd, events, 0};
  for (;;) {
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw_errno("poll");
    return rc > 0;
  }
}

}  // namespace

SocketAddress parse_address(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) {
    throw ConfigError("address '" + text + "' must look like host:port");
  }
  SocketAddress addr;
  addr.host = text.substr(0, colon);
  if (addr.host.empty() || addr.host == "localhost") addr.host = "127.0.0.1";
  const std::string port = text.substr(colon + 1);
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535) {
    throw ConfigError("bad port in address '" + text + "'");
  }
  addr.port = static_cast<std::uint16_t>(p);
  return addr;
}

std::string to_string(const SocketAddress& addr) {
  return addr.host + ":" + std::to_string(addr.port);
}

SocketEndpoint::SocketEndpoint(int fd) : fd_(fd) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

SocketEndpoint::~SocketEndpoint() { close(); }

void SocketEndpoint::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

void SocketEndpoint::send(const Message& msg) {
  if (fd_ < 0) throw DisconnectError("socket closed");
  const auto body = encode_message(msg);
  std::vector<std::uint8_t> frame;
  frame.reserve(4 + body.size());
  const auto len = static_cast<std::uint32_t>(body.size());
  for (int i = 0; i < 4; ++i) frame.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  frame.insert(frame.end(), body.begin(), body.end());

  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) throw DisconnectError("peer closed connection");
      throw_errno("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool SocketEndpoint::read_exact(std::uint8_t* dst, std::size_t n,
                                std::chrono::milliseconds timeout, bool at_frame_start) {
  std::size_t got = 0;
  while (got < n) {
    const auto wait = (at_frame_start && got == 0) ? timeout : std::chrono::milliseconds(30000);
    if (!wait_fd(fd_, POLLIN, wait)) {
      if (at_frame_start && got == 0) return false;
      throw FramingError("timed out in the middle of a frame");
    }
    const ssize_t r = ::recv(fd_, dst + got, n - got, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNRESET) throw DisconnectError("peer reset connection");
      throw_errno("recv");
    }
    if (r == 0) {
      if (at_frame_start && got == 0) throw DisconnectError("peer closed connection");
      throw FramingError("connection closed in the middle of a frame");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

std::optional<Message> SocketEndpoint::recv(std::chrono::milliseconds timeout) {
  if (fd_ < 0) throw DisconnectError("socket closed");
  std::uint8_t prefix[4];
  if (!read_exact(prefix, 4, timeout, true)) return std::nullopt;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(prefix[i]) << (8 * i);
  if (len > kMaxFrameBytes) throw FramingError("frame length " + std::to_string(len) + " too large");
  std::vector<std::uint8_t> body(len);
  read_exact(body.data(), len, timeout, false);
  return decode_message(body);
}

SocketListener::SocketListener(const SocketAddress& addr) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw_errno("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const sockaddr_in sa = to_sockaddr(addr);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) < 0) {
    const int err = errno;
    ::close(fd_);
    errno = err;
    throw_errno("bind " + to_string(addr));
  }
  if (::listen(fd_, 64) < 0) throw_errno("listen");
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

SocketListener::~SocketListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<SocketEndpoint> SocketListener::accept(std::chrono::milliseconds timeout) {
  if (!wait_fd(fd_, POLLIN, timeout)) {
    throw TimeoutError("no connection within " + std::to_string(timeout.count()) + " ms");
  }
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw_errno("accept");
  return std::make_unique<SocketEndpoint>(fd);
}

std::unique_ptr<SocketEndpoint> connect_socket(const SocketAddress& addr,
                                               std::chrono::milliseconds timeout) {
  const sockaddr_in sa = to_sockaddr(addr);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) == 0) {
      return std::make_unique<SocketEndpoint>(fd);
    }
    const int err = errno;
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      errno = err;
      throw_errno("connect " + to_string(addr));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

}  // namespace cdsgd
