#include "cdsgd/protocol.hpp"

#include <bit>
#include <string>

namespace cdsgd {
namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  template <class T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
    }
  }
  void put_reals(std::span<const double> values) {
    for (double v : values) put(std::bit_cast<std::uint64_t>(v));
  }

 private:
  std::vector<std::uint8_t>& out_;
};

template <class T>
T get(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return static_cast<T>(v);
}

std::vector<double> get_reals(std::span<const std::uint8_t> payload) {
  if (payload.size() % 8 != 0) {
    throw FramingError("real-array payload of " + std::to_string(payload.size()) +
                       " bytes is not a multiple of 8");
  }
  std::vector<double> values(payload.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<double>(get<std::uint64_t>(payload, 8 * i));
  }
  return values;
}

struct HeaderFields {
  WorkerId worker = 0;
  KeyId key = 0;
  std::uint64_t iter = 0;
};

HeaderFields header_fields(const Message& msg) {
  return std::visit(
      [](const auto& m) -> HeaderFields {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PushFull> || std::is_same_v<T, PushQuantized>) {
          return {m.worker, m.key, m.iter};
        } else if constexpr (std::is_same_v<T, PullRequest>) {
          return {m.worker, 0, m.iter};
        } else if constexpr (std::is_same_v<T, Weights>) {
          return {0, m.key, m.iter};
        } else {
          return {m.worker, 0, 0};
        }
      },
      msg);
}

}  // namespace

MessageTag tag_of(const Message& msg) noexcept {
  return static_cast<MessageTag>(msg.index() + 1);
}

std::string_view to_string(MessageTag tag) noexcept {
  switch (tag) {
    case MessageTag::push_full: return "PushFull";
    case MessageTag::push_quantized: return "PushQuantized";
    case MessageTag::pull_request: return "PullRequest";
    case MessageTag::weights: return "Weights";
    case MessageTag::shutdown: return "Shutdown";
  }
  return "?";
}

std::size_t payload_size(const Message& msg) {
  if (const auto* f = std::get_if<PushFull>(&msg)) return 8 * f->values.size();
  if (const auto* w = std::get_if<Weights>(&msg)) return 8 * w->values.size();
  if (const auto* q = std::get_if<PushQuantized>(&msg)) {
    return kPayloadHeaderBytes + 4 * q->payload.words.size();
  }
  return 0;
}

std::vector<std::uint8_t> encode_message(const Message& msg) {
  const std::size_t body = payload_size(msg);
  if (body > 0xFFFFFFFFull) throw BoundsError("message payload exceeds 4 GiB");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + body);
  Writer w(out);
  const HeaderFields h = header_fields(msg);
  w.put(kWireMagic);
  w.put(kWireVersion);
  w.put(static_cast<std::uint8_t>(tag_of(msg)));
  w.put(h.worker);
  w.put(h.key);
  w.put(h.iter);
  w.put(static_cast<std::uint32_t>(body));
  if (const auto* f = std::get_if<PushFull>(&msg)) w.put_reals(f->values);
  if (const auto* wt = std::get_if<Weights>(&msg)) w.put_reals(wt->values);
  if (const auto* q = std::get_if<PushQuantized>(&msg)) serialize_payload(q->payload, out);
  return out;
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw FramingError("frame of " + std::to_string(bytes.size()) +
                       " bytes is shorter than the header");
  }
  const auto magic = get<std::uint16_t>(bytes, 0);
  if (magic != kWireMagic) throw ProtocolError("bad magic " + std::to_string(magic));
  if (bytes[2] != kWireVersion) {
    throw ProtocolError("unsupported wire version " + std::to_string(bytes[2]));
  }
  const std::uint8_t tag = bytes[3];
  const auto worker = get<std::uint16_t>(bytes, 4);
  const auto key = get<std::uint16_t>(bytes, 6);
  const auto iter = get<std::uint64_t>(bytes, 8);
  const auto len = get<std::uint32_t>(bytes, 16);
  if (bytes.size() - kHeaderBytes != len) {
    throw FramingError("header declares " + std::to_string(len) + " payload bytes, frame has " +
                       std::to_string(bytes.size() - kHeaderBytes));
  }
  const auto payload = bytes.subspan(kHeaderBytes);

  switch (static_cast<MessageTag>(tag)) {
    case MessageTag::push_full:
      return PushFull{worker, iter, key, get_reals(payload)};
    case MessageTag::push_quantized:
      return PushQuantized{worker, iter, key, deserialize_payload(payload)};
    case MessageTag::pull_request:
      if (len != 0) throw FramingError("PullRequest carries no payload");
      return PullRequest{worker, iter};
    case MessageTag::weights:
      return Weights{iter, key, get_reals(payload)};
    case MessageTag::shutdown:
      if (len != 0) throw FramingError("Shutdown carries no payload");
      return Shutdown{worker};
  }
  throw ProtocolError("unknown message tag " + std::to_string(tag));
}

}  // namespace cdsgd
