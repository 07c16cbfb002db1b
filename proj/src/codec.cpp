#include "cdsgd/codec.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

namespace cdsgd {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint32_t> pack_symbols(std::span<const Symbol> symbols) {
  std::vector<std::uint32_t> words((symbols.size() + kSymbolsPerWord - 1) / kSymbolsPerWord, 0);
  for (std::size_t j = 0; j < symbols.size(); ++j) {
    const auto code = static_cast<std::uint32_t>(symbols[j]);
    if (code > 2) {
      throw CorruptPayloadError("invalid symbol at index " + std::to_string(j));
    }
    words[j / kSymbolsPerWord] |= code << (2 * (j % kSymbolsPerWord));
  }
  return words;
}

std::vector<Symbol> unpack_symbols(std::span<const std::uint32_t> words,
                                   std::size_t length) {
  if (length > kSymbolsPerWord * words.size()) {
    throw BoundsError("length " + std::to_string(length) + " exceeds capacity of " +
                      std::to_string(words.size()) + " words");
  }
  std::vector<Symbol> symbols(length);
  for (std::size_t j = 0; j < length; ++j) {
    const auto code = (words[j / kSymbolsPerWord] >> (2 * (j % kSymbolsPerWord))) & 0x3u;
    if (code == 0x3u) {
      throw CorruptPayloadError("reserved symbol 11 at index " + std::to_string(j));
    }
    symbols[j] = static_cast<Symbol>(code);
  }
  return symbols;
}

QuantizedPayload quantize(ResidualState& state, std::span<const double> grad,
                          double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("threshold must be > 0");
  if (state.residual.size() != grad.size()) {
    throw StructuralError("residual has " + std::to_string(state.residual.size()) +
                          " elements, gradient has " + std::to_string(grad.size()));
  }
  if (grad.size() > 0xFFFFFFFFull) throw BoundsError("payload longer than 2^32-1");

  QuantizedPayload payload;
  payload.threshold = alpha;
  payload.length = static_cast<std::uint32_t>(grad.size());
  payload.words.assign((grad.size() + kSymbolsPerWord - 1) / kSymbolsPerWord, 0);
  for (std::size_t j = 0; j < grad.size(); ++j) {
    const double a = state.residual[j] + grad[j];
    if (!std::isfinite(a)) {
      throw NumericError("non-finite accumulated gradient at element " +
                         std::to_string(j) + " of key " + std::to_string(state.key));
    }
    Symbol s = Symbol::zero;
    double emitted = 0.0;
    if (a >= alpha) {
      s = Symbol::plus;
      emitted = alpha;
    } else if (a <= -alpha) {
      s = Symbol::minus;
      emitted = -alpha;
    }
    state.residual[j] = a - emitted;
    payload.words[j / kSymbolsPerWord] |= static_cast<std::uint32_t>(s)
                                          << (2 * (j % kSymbolsPerWord));
  }
  return payload;
}

std::vector<double> dequantize(const QuantizedPayload& payload) {
  const auto symbols = unpack_symbols(payload.words, payload.length);
  std::vector<double> out(symbols.size());
  for (std::size_t j = 0; j < symbols.size(); ++j) {
    switch (symbols[j]) {
      case Symbol::zero: out[j] = 0.0; break;
      case Symbol::plus: out[j] = payload.threshold; break;
      case Symbol::minus: out[j] = -payload.threshold; break;
    }
  }
  return out;
}

double compression_ratio(std::size_t n) noexcept {
  if (n == 0) return 1.0;
  return static_cast<double>(4 * n) / static_cast<double>(payload_bytes(n));
}

void serialize_payload(const QuantizedPayload& payload,
                       std::vector<std::uint8_t>& out) {
  out.reserve(out.size() + kPayloadHeaderBytes + 4 * payload.words.size());
  const auto bits = std::bit_cast<std::uint64_t>(payload.threshold);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  put_u32(out, payload.length);
  out.push_back(kSymbolBits);
  for (std::uint32_t w : payload.words) put_u32(out, w);
}

QuantizedPayload deserialize_payload(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPayloadHeaderBytes) {
    throw FramingError("quantized payload shorter than its header");
  }
  QuantizedPayload p;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  p.threshold = std::bit_cast<double>(bits);
  p.length = get_u32(bytes, 8);
  if (bytes[12] != kSymbolBits) {
    throw CorruptPayloadError("unsupported symbol width " + std::to_string(bytes[12]));
  }
  if (!(p.threshold > 0.0) || !std::isfinite(p.threshold)) {
    throw CorruptPayloadError("threshold must be finite and > 0");
  }
  const std::size_t n_words = (static_cast<std::size_t>(p.length) + kSymbolsPerWord - 1) / kSymbolsPerWord;
  if (bytes.size() != kPayloadHeaderBytes + 4 * n_words) {
    throw FramingError("quantized payload of length " + std::to_string(p.length) +
                       " needs " + std::to_string(kPayloadHeaderBytes + 4 * n_words) +
                       " bytes, got " + std::to_string(bytes.size()));
  }
  p.words.resize(n_words);
  for (std::size_t w = 0; w < n_words; ++w) p.words[w] = get_u32(bytes, kPayloadHeaderBytes + 4 * w);
  return p;
}

}  // namespace cdsgd
