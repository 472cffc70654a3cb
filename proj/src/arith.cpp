#include "picd/arith.hpp"

#include <stdexcept>

namespace picd {

namespace {

constexpr uint64_t kHalf = 1ull << 31;
constexpr uint64_t kQuarter = 1ull << 30;
constexpr uint64_t kThreeQuarters = 3ull << 30;

// The decoder may read a bounded number of zero bits past the end of the
// stream while resolving the last symbols: up to 32 to fill the code
// register at startup (short streams) plus renormalization slack in the
// final consumes. Anything well beyond that means the stream was truncated
// or lacks its end marker; without this guard a corrupt stream could spin
// out fabricated symbols from the zero padding.
constexpr size_t kMaxPadBits = 128;

void check_range(uint32_t cum_lo, uint32_t cum_hi, uint32_t total) {
  if (total == 0 || total > ArithEncoder::kMaxTotal || cum_lo >= cum_hi || cum_hi > total)
    throw std::runtime_error("arith: invalid frequency range");
}

}  // namespace

void ArithEncoder::encode(uint32_t cum_lo, uint32_t cum_hi, uint32_t total) {
  check_range(cum_lo, cum_hi, total);
  const uint64_t range = high_ - low_ + 1;
  high_ = low_ + range * cum_hi / total - 1;
  low_ = low_ + range * cum_lo / total;
  for (;;) {
    if (high_ < kHalf) {
      emit(0);
    } else if (low_ >= kHalf) {
      emit(1);
      low_ -= kHalf;
      high_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      ++pending_;
      low_ -= kQuarter;
      high_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
  }
}

void ArithEncoder::finish() {
  ++pending_;
  emit(low_ < kQuarter ? 0 : 1);
}

void ArithEncoder::emit(int bit) {
  out_.put_bit(bit);
  while (pending_ > 0) {
    out_.put_bit(!bit);
    --pending_;
  }
}

ArithDecoder::ArithDecoder(BitReader& in) : in_(in) {
  for (int i = 0; i < 32; ++i)
    value_ = (value_ << 1) | uint64_t(in_.get_bit_padded());
}

uint32_t ArithDecoder::decode_target(uint32_t total) {
  const uint64_t range = high_ - low_ + 1;
  const uint64_t target = ((value_ - low_ + 1) * total - 1) / range;
  return uint32_t(target);
}

void ArithDecoder::consume(uint32_t cum_lo, uint32_t cum_hi, uint32_t total) {
  check_range(cum_lo, cum_hi, total);
  const uint64_t range = high_ - low_ + 1;
  high_ = low_ + range * cum_hi / total - 1;
  low_ = low_ + range * cum_lo / total;
  for (;;) {
    if (high_ < kHalf) {
      // nothing to subtract
    } else if (low_ >= kHalf) {
      low_ -= kHalf;
      high_ -= kHalf;
      value_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      low_ -= kQuarter;
      high_ -= kQuarter;
      value_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
    value_ = (value_ << 1) | uint64_t(in_.get_bit_padded());
    if (in_.pad_count() > kMaxPadBits)
      throw std::runtime_error("arith: truncated stream");
  }
}

AdaptiveByteModel::AdaptiveByteModel() {
  freq_.fill(1);
  total_ = kNumSymbols;
}

void AdaptiveByteModel::range_of(int sym, uint32_t& cum_lo, uint32_t& cum_hi) const {
  uint32_t lo = 0;
  for (int s = 0; s < sym; ++s) lo += freq_[size_t(s)];
  cum_lo = lo;
  cum_hi = lo + freq_[size_t(sym)];
}

int AdaptiveByteModel::find(uint32_t target, uint32_t& cum_lo, uint32_t& cum_hi) const {
  uint32_t lo = 0;
  for (int s = 0; s < kNumSymbols; ++s) {
    const uint32_t hi = lo + freq_[size_t(s)];
    if (target < hi) {
      cum_lo = lo;
      cum_hi = hi;
      return s;
    }
    lo = hi;
  }
  throw std::runtime_error("arith: decode target out of range");
}

void AdaptiveByteModel::update(int sym) {
  freq_[size_t(sym)] += kIncrement;
  total_ += kIncrement;
  if (total_ > kHalveAt) {
    total_ = 0;
    for (auto& f : freq_) {
      f = (f + 1) >> 1;
      total_ += f;
    }
  }
}

std::vector<uint8_t> arith_encode_bytes(const uint8_t* data, size_t size) {
  BitWriter out;
  ArithEncoder enc(out);
  AdaptiveByteModel model;
  uint32_t lo, hi;
  for (size_t i = 0; i < size; ++i) {
    const int sym = data[i];
    model.range_of(sym, lo, hi);
    enc.encode(lo, hi, model.total());
    model.update(sym);
  }
  model.range_of(AdaptiveByteModel::kEos, lo, hi);
  enc.encode(lo, hi, model.total());
  enc.finish();
  return out.bytes();
}

std::vector<uint8_t> arith_encode_bytes(const std::vector<uint8_t>& data) {
  return arith_encode_bytes(data.data(), data.size());
}

std::vector<uint8_t> arith_decode_bytes(const uint8_t* data, size_t size) {
  BitReader in(data, size);
  ArithDecoder dec(in);
  AdaptiveByteModel model;
  std::vector<uint8_t> out;
  // Termination on corrupt input is guaranteed by the pad guard inside
  // consume(): every symbol shrinks the interval, so a stream with no end
  // marker keeps renormalizing until the phantom-bit budget trips.
  for (;;) {
    uint32_t lo, hi;
    const int sym = model.find(dec.decode_target(model.total()), lo, hi);
    dec.consume(lo, hi, model.total());
    if (sym == AdaptiveByteModel::kEos) break;
    model.update(sym);
    out.push_back(uint8_t(sym));
  }
  return out;
}

std::vector<uint8_t> arith_decode_bytes(const std::vector<uint8_t>& data) {
  return arith_decode_bytes(data.data(), data.size());
}

}  // namespace picd
