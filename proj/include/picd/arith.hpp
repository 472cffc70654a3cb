#pragma once

// Binary arithmetic coding.
//
// ArithEncoder / ArithDecoder implement the classic integer interval coder
// (Witten, Neal & Cleary style) over a 32-bit code space with 64-bit
// intermediates. They are model-agnostic: callers pass cumulative frequency
// ranges [cum_lo, cum_hi) out of a total, so the same core drives both the
// adaptive order-0 byte model used for text payloads and the static
// per-channel models used for quantized latents.
//
// Frequency totals must stay at or below kMaxTotal so that the coder's
// interval never collapses: after renormalization the range is at least
// 2^30, which leaves 2^14 of headroom per frequency unit.

#include <array>
#include <cstdint>
#include <vector>

#include "picd/bits.hpp"

namespace picd {

class ArithEncoder {
 public:
  static constexpr uint32_t kMaxTotal = 1u << 16;

  explicit ArithEncoder(BitWriter& out) : out_(out) {}

  // Narrows the interval to the symbol occupying [cum_lo, cum_hi) of total.
  void encode(uint32_t cum_lo, uint32_t cum_hi, uint32_t total);

  // Flushes the final disambiguating bits. Must be called exactly once.
  void finish();

 private:
  void emit(int bit);

  BitWriter& out_;
  uint64_t low_ = 0;
  uint64_t high_ = (1ull << 32) - 1;
  uint64_t pending_ = 0;
};

class ArithDecoder {
 public:
  explicit ArithDecoder(BitReader& in);

  // Returns a value in [0, total); the caller maps it to a symbol whose
  // cumulative range contains it, then calls consume with that range.
  uint32_t decode_target(uint32_t total);

  void consume(uint32_t cum_lo, uint32_t cum_hi, uint32_t total);

  // Phantom bits read past the end of the underlying stream. A valid
  // stream never needs more than the width of the code register plus the
  // final renormalization, so large values indicate corruption.
  size_t pad_count() const { return in_.pad_count(); }

 private:
  BitReader& in_;
  uint64_t low_ = 0;
  uint64_t high_ = (1ull << 32) - 1;
  uint64_t value_ = 0;
};

// Adaptive order-0 model over 257 symbols: byte values 0..255 plus an
// end-of-stream marker. Starts uniform, bumps a symbol's frequency by 32
// after coding it, and halves all frequencies (rounding up, so none hits
// zero) when the total would exceed 2^15. Encoder and decoder run the
// identical update rule, which keeps their states in lockstep.
class AdaptiveByteModel {
 public:
  static constexpr int kEos = 256;
  static constexpr int kNumSymbols = 257;
  static constexpr uint32_t kIncrement = 32;
  static constexpr uint32_t kHalveAt = 1u << 15;

  AdaptiveByteModel();

  uint32_t total() const { return total_; }
  void range_of(int sym, uint32_t& cum_lo, uint32_t& cum_hi) const;
  int find(uint32_t target, uint32_t& cum_lo, uint32_t& cum_hi) const;
  void update(int sym);

  const std::array<uint32_t, kNumSymbols>& freqs() const { return freq_; }

 private:
  std::array<uint32_t, kNumSymbols> freq_;
  uint32_t total_;
};

// Self-terminating adaptive coding of a byte string. Decode errors
// (truncation, missing end marker, garbage) throw std::runtime_error.
std::vector<uint8_t> arith_encode_bytes(const uint8_t* data, size_t size);
std::vector<uint8_t> arith_encode_bytes(const std::vector<uint8_t>& data);
std::vector<uint8_t> arith_decode_bytes(const uint8_t* data, size_t size);
std::vector<uint8_t> arith_decode_bytes(const std::vector<uint8_t>& data);

}  // namespace picd
