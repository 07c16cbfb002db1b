#pragma once

// 2-bit threshold quantization with residual error feedback.
//
// Symbol j of a payload lives in bits [2*(j%16), 2*(j%16)+1] of word j/16:
//   00 = 0, 01 = +alpha, 10 = -alpha, 11 = invalid.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdsgd/numcore.hpp"

namespace cdsgd {

enum class Symbol : std::uint8_t { zero = 0, plus = 1, minus = 2 };

inline constexpr std::size_t kSymbolsPerWord = 16;
inline constexpr std::uint8_t kSymbolBits = 2;
/// f64 threshold + u32 length + u8 symbol width.
inline constexpr std::size_t kPayloadHeaderBytes = 13;

struct QuantizedPayload {
  std::vector<std::uint32_t> words;
  double threshold = 0.0;
  std::uint32_t length = 0;

  friend bool operator==(const QuantizedPayload&, const QuantizedPayload&) = default;
};

/// Accumulated quantization error for one (worker, key).
struct ResidualState {
  WorkerId worker = 0;
  KeyId key = 0;
  std::vector<double> residual;
};

std::vector<std::uint32_t> pack_symbols(std::span<const Symbol> symbols);
std::vector<Symbol> unpack_symbols(std::span<const std::uint32_t> words,
                                   std::size_t length);

/// For each element a = r + g: emits +alpha if a >= alpha, -alpha if
/// a <= -alpha, else 0, and stores r' = a - emitted in `state`.
QuantizedPayload quantize(ResidualState& state, std::span<const double> grad,
                          double alpha);

std::vector<double> dequantize(const QuantizedPayload& payload);

/// Packed payload size against the 4-byte-per-element baseline.
constexpr std::size_t payload_bytes(std::size_t n) noexcept {
  return 4 * ((n + kSymbolsPerWord - 1) / kSymbolsPerWord);
}
/// 4n / payload_bytes(n); 1.0 for an empty payload.
double compression_ratio(std::size_t n) noexcept;

/// Serialized size: header plus packed words.
constexpr std::size_t serialized_payload_size(std::size_t n) noexcept {
  return kPayloadHeaderBytes + payload_bytes(n);
}

/// Little-endian: f64 threshold, u32 length, u8 symbol width (2), words.
void serialize_payload(const QuantizedPayload& payload,
                       std::vector<std::uint8_t>& out);
QuantizedPayload deserialize_payload(std::span<const std::uint8_t> bytes);

}  // namespace cdsgd
