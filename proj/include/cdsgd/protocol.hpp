#pragma once

// Worker <-> server messages and their wire format.
//
// Header (20 bytes, little-endian):
//   u16 magic 0xCD5D | u8 version | u8 tag | u16 worker | u16 key |
//   u64 iter | u32 payload_len
// followed by payload_len bytes: raw f64 values for PushFull/Weights, a
// serialized QuantizedPayload for PushQuantized, nothing otherwise.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "cdsgd/codec.hpp"

namespace cdsgd {

inline constexpr std::uint16_t kWireMagic = 0xCD5D;
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;

enum class MessageTag : std::uint8_t {
  push_full = 1,
  push_quantized = 2,
  pull_request = 3,
  weights = 4,
  shutdown = 5,
};

struct PushFull {
  WorkerId worker = 0;
  std::uint64_t iter = 0;
  KeyId key = 0;
  std::vector<double> values;
  friend bool operator==(const PushFull&, const PushFull&) = default;
};

struct PushQuantized {
  WorkerId worker = 0;
  std::uint64_t iter = 0;
  KeyId key = 0;
  QuantizedPayload payload;
  friend bool operator==(const PushQuantized&, const PushQuantized&) = default;
};

/// Asks for the global weights after `iter` committed updates.
struct PullRequest {
  WorkerId worker = 0;
  std::uint64_t iter = 0;
  friend bool operator==(const PullRequest&, const PullRequest&) = default;
};

/// Global weights of one key after `iter` committed updates.
struct Weights {
  std::uint64_t iter = 0;
  KeyId key = 0;
  std::vector<double> values;
  friend bool operator==(const Weights&, const Weights&) = default;
};

struct Shutdown {
  WorkerId worker = 0;
  friend bool operator==(const Shutdown&, const Shutdown&) = default;
};

using Message = std::variant<PushFull, PushQuantized, PullRequest, Weights, Shutdown>;

MessageTag tag_of(const Message& msg) noexcept;
std::string_view to_string(MessageTag tag) noexcept;

std::vector<std::uint8_t> encode_message(const Message& msg);
/// Throws ProtocolError on bad magic/version/tag and FramingError when the
/// buffer length disagrees with the header.
Message decode_message(std::span<const std::uint8_t> bytes);

/// Bytes of the payload section only (what a push costs on the wire beyond
/// the fixed header).
std::size_t payload_size(const Message& msg);

}  // namespace cdsgd
