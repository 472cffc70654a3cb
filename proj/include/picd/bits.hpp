#pragma once

// MSB-first bit packing and the integer codes built on top of it.

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace picd {

class BitWriter {
 public:
  void put_bit(int bit) {
    if (nbits_ % 8 == 0) buf_.push_back(0);
    if (bit) buf_.back() |= uint8_t(0x80u >> (nbits_ % 8));
    ++nbits_;
  }

  // Writes the low `count` bits of value, most significant first.
  void put_bits(uint64_t value, int count) {
    for (int i = count - 1; i >= 0; --i) put_bit(int((value >> i) & 1));
  }

  // Pads with zero bits to the next byte boundary.
  void align() {
    while (nbits_ % 8 != 0) put_bit(0);
  }

  void put_bytes(const std::vector<uint8_t>& bytes) {
    align();
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
    nbits_ += 8 * bytes.size();
  }

  size_t bit_count() const { return nbits_; }

  // Finished stream; the final partial byte, if any, is zero-padded.
  const std::vector<uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
  size_t nbits_ = 0;
};

class BitReader {
 public:
  BitReader(const uint8_t* data, size_t size) : data_(data), nbits_(size * 8) {}
  explicit BitReader(const std::vector<uint8_t>& v) : BitReader(v.data(), v.size()) {}

  int get_bit() {
    if (pos_ >= nbits_) throw std::runtime_error("BitReader: read past end of stream");
    return get_bit_padded();
  }

  // Like get_bit, but reads past the end return 0. The arithmetic decoder
  // legitimately consumes a handful of phantom bits while resolving its
  // final interval; pad_count() lets it bound how many.
  int get_bit_padded() {
    int bit = 0;
    if (pos_ < nbits_) bit = (data_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1;
    else ++pads_;
    ++pos_;
    return bit;
  }

  uint64_t get_bits(int count) {
    uint64_t v = 0;
    for (int i = 0; i < count; ++i) v = (v << 1) | uint64_t(get_bit());
    return v;
  }

  void align() { pos_ = (pos_ + 7) & ~size_t(7); }

  std::vector<uint8_t> get_bytes(size_t n) {
    align();
    if (pos_ + 8 * n > nbits_)
      throw std::runtime_error("BitReader: read past end of stream");
    const uint8_t* p = data_ + (pos_ >> 3);
    pos_ += 8 * n;
    return std::vector<uint8_t>(p, p + n);
  }

  size_t bit_pos() const { return pos_; }
  size_t bits_left() const { return pos_ >= nbits_ ? 0 : nbits_ - pos_; }
  size_t pad_count() const { return pads_; }

 private:
  const uint8_t* data_;
  size_t nbits_;
  size_t pos_ = 0;
  size_t pads_ = 0;
};

// Order-0 exponential Golomb code for unsigned integers: v+1 written as
// its binary form preceded by (bit-length - 1) zeros. 0 -> "1", 2 -> "011",
// 8 -> "0001001". Codeword length is 2*floor(log2(v+1)) + 1.
inline void exp_golomb_encode(uint64_t v, BitWriter& w) {
  if (v == UINT64_MAX) throw std::runtime_error("exp-golomb: value out of range");
  const uint64_t x = v + 1;
  const int nbits = std::bit_width(x);
  for (int i = 0; i < nbits - 1; ++i) w.put_bit(0);
  w.put_bits(x, nbits);
}

inline uint64_t exp_golomb_decode(BitReader& r) {
  int zeros = 0;
  while (r.get_bit() == 0)
    if (++zeros > 63) throw std::runtime_error("exp-golomb: corrupt prefix");
  uint64_t x = 1;
  for (int i = 0; i < zeros; ++i) x = (x << 1) | uint64_t(r.get_bit());
  return x - 1;
}

inline int exp_golomb_length(uint64_t v) {
  return 2 * (std::bit_width(v + 1) - 1) + 1;
}

// Zigzag map between signed and unsigned: 0,-1,1,-2,2,... -> 0,1,2,3,4,...
inline uint64_t zigzag_encode(int64_t v) {
  return (uint64_t(v) << 1) ^ uint64_t(v >> 63);
}

inline int64_t zigzag_decode(uint64_t u) {
  return int64_t(u >> 1) ^ -int64_t(u & 1);
}

}  // namespace picd
