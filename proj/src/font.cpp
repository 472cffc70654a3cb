#include "picd/font.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>

namespace picd {

namespace {

// Classic 5x7 face, column-major, bit 0 = top row. Three glyphs deviate
// from the common table: ';' grows a bottom-left tail pixel, '~' is drawn
// as a mid-height wave, and '!' keeps a two-row gap above its dot. The
// changes keep every pair of characters distinct after the OR-pooled
// downscale to height 6, which the common shapes do not (';' collapses
// onto ':' there and '!' onto '|').
constexpr uint8_t kFont[95][5] = {
    {0x00, 0x00, 0x00, 0x00, 0x00},  // space
    {0x00, 0x00, 0x4f, 0x00, 0x00},  // !
    {0x00, 0x07, 0x00, 0x07, 0x00},  // "
    {0x14, 0x7f, 0x14, 0x7f, 0x14},  // #
    {0x24, 0x2a, 0x7f, 0x2a, 0x12},  // $
    {0x23, 0x13, 0x08, 0x64, 0x62},  // %
    {0x36, 0x49, 0x55, 0x22, 0x50},  // &
    {0x00, 0x05, 0x03, 0x00, 0x00},  // '
    {0x00, 0x1c, 0x22, 0x41, 0x00},  // (
    {0x00, 0x41, 0x22, 0x1c, 0x00},  // )
    {0x08, 0x2a, 0x1c, 0x2a, 0x08},  // *
    {0x08, 0x08, 0x3e, 0x08, 0x08},  // +
    {0x00, 0x50, 0x30, 0x00, 0x00},  // ,
    {0x08, 0x08, 0x08, 0x08, 0x08},  // -
    {0x00, 0x60, 0x60, 0x00, 0x00},  // .
    {0x20, 0x10, 0x08, 0x04, 0x02},  // /
    {0x3e, 0x51, 0x49, 0x45, 0x3e},  // 0
    {0x00, 0x42, 0x7f, 0x40, 0x00},  // 1
    {0x42, 0x61, 0x51, 0x49, 0x46},  // 2
    {0x21, 0x41, 0x45, 0x4b, 0x31},  // 3
    {0x18, 0x14, 0x12, 0x7f, 0x10},  // 4
    {0x27, 0x45, 0x45, 0x45, 0x39},  // 5
    {0x3c, 0x4a, 0x49, 0x49, 0x30},  // 6
    {0x01, 0x71, 0x09, 0x05, 0x03},  // 7
    {0x36, 0x49, 0x49, 0x49, 0x36},  // 8
    {0x06, 0x49, 0x49, 0x29, 0x1e},  // 9
    {0x00, 0x36, 0x36, 0x00, 0x00},  // :
    {0x40, 0x36, 0x36, 0x00, 0x00},  // ;
    {0x00, 0x08, 0x14, 0x22, 0x41},  // <
    {0x14, 0x14, 0x14, 0x14, 0x14},  // =
    {0x41, 0x22, 0x14, 0x08, 0x00},  // >
    {0x02, 0x01, 0x51, 0x09, 0x06},  // ?
    {0x32, 0x49, 0x79, 0x41, 0x3e},  // @
    {0x7e, 0x11, 0x11, 0x11, 0x7e},  // A
    {0x7f, 0x49, 0x49, 0x49, 0x36},  // B
    {0x3e, 0x41, 0x41, 0x41, 0x22},  // C
    {0x7f, 0x41, 0x41, 0x22, 0x1c},  // D
    {0x7f, 0x49, 0x49, 0x49, 0x41},  // E
    {0x7f, 0x09, 0x09, 0x01, 0x01},  // F
    {0x3e, 0x41, 0x41, 0x51, 0x32},  // G
    {0x7f, 0x08, 0x08, 0x08, 0x7f},  // H
    {0x00, 0x41, 0x7f, 0x41, 0x00},  // I
    {0x20, 0x40, 0x41, 0x3f, 0x01},  // J
    {0x7f, 0x08, 0x14, 0x22, 0x41},  // K
    {0x7f, 0x40, 0x40, 0x40, 0x40},  // L
    {0x7f, 0x02, 0x04, 0x02, 0x7f},  // M
    {0x7f, 0x04, 0x08, 0x10, 0x7f},  // N
    {0x3e, 0x41, 0x41, 0x41, 0x3e},  // O
    {0x7f, 0x09, 0x09, 0x09, 0x06},  // P
    {0x3e, 0x41, 0x51, 0x21, 0x5e},  // Q
    {0x7f, 0x09, 0x19, 0x29, 0x46},  // R
    {0x46, 0x49, 0x49, 0x49, 0x31},  // S
    {0x01, 0x01, 0x7f, 0x01, 0x01},  // T
    {0x3f, 0x40, 0x40, 0x40, 0x3f},  // U
    {0x1f, 0x20, 0x40, 0x20, 0x1f},  // V
    {0x7f, 0x20, 0x18, 0x20, 0x7f},  // W
    {0x63, 0x14, 0x08, 0x14, 0x63},  // X
    {0x03, 0x04, 0x78, 0x04, 0x03},  // Y
    {0x61, 0x51, 0x49, 0x45, 0x43},  // Z
    {0x00, 0x00, 0x7f, 0x41, 0x41},  // [
    {0x02, 0x04, 0x08, 0x10, 0x20},  // backslash
    {0x41, 0x41, 0x7f, 0x00, 0x00},  // ]
    {0x04, 0x02, 0x01, 0x02, 0x04},  // ^
    {0x40, 0x40, 0x40, 0x40, 0x40},  // _
    {0x00, 0x01, 0x02, 0x04, 0x00},  // `
    {0x20, 0x54, 0x54, 0x54, 0x78},  // a
    {0x7f, 0x48, 0x44, 0x44, 0x38},  // b
    {0x38, 0x44, 0x44, 0x44, 0x20},  // c
    {0x38, 0x44, 0x44, 0x48, 0x7f},  // d
    {0x38, 0x54, 0x54, 0x54, 0x18},  // e
    {0x08, 0x7e, 0x09, 0x01, 0x02},  // f
    {0x08, 0x14, 0x54, 0x54, 0x3c},  // g
    {0x7f, 0x08, 0x04, 0x04, 0x78},  // h
    {0x00, 0x44, 0x7d, 0x40, 0x00},  // i
    {0x20, 0x40, 0x44, 0x3d, 0x00},  // j
    {0x00, 0x7f, 0x10, 0x28, 0x44},  // k
    {0x00, 0x41, 0x7f, 0x40, 0x00},  // l
    {0x7c, 0x04, 0x18, 0x04, 0x78},  // m
    {0x7c, 0x08, 0x04, 0x04, 0x78},  // n
    {0x38, 0x44, 0x44, 0x44, 0x38},  // o
    {0x7c, 0x14, 0x14, 0x14, 0x08},  // p
    {0x08, 0x14, 0x14, 0x18, 0x7c},  // q
    {0x7c, 0x08, 0x04, 0x04, 0x08},  // r
    {0x48, 0x54, 0x54, 0x54, 0x20},  // s
    {0x04, 0x3f, 0x44, 0x40, 0x20},  // t
    {0x3c, 0x40, 0x40, 0x20, 0x7c},  // u
    {0x1c, 0x20, 0x40, 0x20, 0x1c},  // v
    {0x3c, 0x40, 0x30, 0x40, 0x3c},  // w
    {0x44, 0x28, 0x10, 0x28, 0x44},  // x
    {0x0c, 0x50, 0x50, 0x50, 0x3c},  // y
    {0x44, 0x64, 0x54, 0x4c, 0x44},  // z
    {0x00, 0x08, 0x36, 0x41, 0x00},  // {
    {0x00, 0x00, 0x7f, 0x00, 0x00},  // |
    {0x00, 0x41, 0x36, 0x08, 0x00},  // }
    {0x04, 0x02, 0x04, 0x08, 0x04},  // ~
};

// Source pixel range covered by destination index dst. Upscaling picks the
// nearest source sample; downscaling partitions the source so every base
// row or column lands in exactly one destination cell (an OR over that
// cell). Disjoint cells matter: an overlapping footprint smears adjacent
// rows together and collapses distinct glyphs at height 6.
void src_range(int dst, int dst_size, int src_size, int& lo, int& hi) {
  if (dst_size >= src_size) {
    lo = hi = (2 * dst + 1) * src_size / (2 * dst_size);
  } else {
    lo = dst * src_size / dst_size;
    hi = (dst + 1) * src_size / dst_size - 1;
  }
}

}  // namespace

const uint8_t* font_columns(char c) {
  if (c < 0x20 || c > 0x7e)
    throw std::runtime_error("font: unsupported character code " +
                             std::to_string(int(uint8_t(c))));
  return kFont[c - 0x20];
}

std::vector<uint8_t> glyph_bitmap(char c, int h) {
  if (h < 1) throw std::runtime_error("font: non-positive glyph height");
  const uint8_t* cols = font_columns(c);
  const int w = glyph_width(h);
  std::vector<uint8_t> bits(size_t(w) * size_t(h), 0);
  for (int j = 0; j < h; ++j) {
    int r0, r1;
    src_range(j, h, kFontBaseH, r0, r1);
    for (int i = 0; i < w; ++i) {
      int c0, c1;
      src_range(i, w, kFontBaseW, c0, c1);
      uint8_t on = 0;
      for (int cc = c0; cc <= c1 && !on; ++cc)
        for (int rr = r0; rr <= r1 && !on; ++rr)
          on = (cols[cc] >> rr) & 1;
      bits[size_t(j) * size_t(w) + size_t(i)] = on;
    }
  }
  return bits;
}

FontAtlas::FontAtlas(int h)
    : h_(h), w_(glyph_width(h)), adv_(glyph_advance(h)) {
  patterns_.resize(kAlphabetSize);
  std::vector<int> tops, lefts;
  for (int k = 0; k < kAlphabetSize; ++k) {
    GlyphPattern& p = patterns_[size_t(k)];
    p.ch = char(kAlphabetFirst + k);
    p.w = w_;
    p.h = h_;
    p.bits = glyph_bitmap(p.ch, h_);
    int top = h_, bottom = -1, left = w_, right = -1;
    for (int j = 0; j < h_; ++j)
      for (int i = 0; i < w_; ++i)
        if (p.bits[size_t(j) * size_t(w_) + size_t(i)]) {
          if (j < top) top = j;
          if (j > bottom) bottom = j;
          if (i < left) left = i;
          if (i > right) right = i;
        }
    if (bottom < 0)
      throw std::runtime_error(std::string("font: glyph '") + p.ch +
                               "' scales to an empty bitmap at height " +
                               std::to_string(h_));
    p.top_off = top;
    p.left_off = left;
    p.bottom_gap = h_ - 1 - bottom;
    p.right_gap = w_ - 1 - right;
    tops.push_back(top);
    lefts.push_back(left);
    if (p.right_gap > max_right_gap_) max_right_gap_ = p.right_gap;
    const std::string key(p.bits.begin(), p.bits.end());
    if (!exact_.emplace(key, k).second)
      throw std::runtime_error(std::string("font: glyphs collide at height ") +
                               std::to_string(h_));
  }
  auto dedupe = [](std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  dedupe(tops);
  dedupe(lefts);
  top_offsets_ = std::move(tops);
  left_offsets_ = std::move(lefts);
}

const GlyphPattern& FontAtlas::pattern(char c) const {
  if (!char_supported(c))
    throw std::runtime_error("font: character outside the alphabet");
  return patterns_[size_t(c - kAlphabetFirst)];
}

const GlyphPattern* FontAtlas::match_exact(const std::vector<uint8_t>& bits) const {
  const std::string key(bits.begin(), bits.end());
  const auto it = exact_.find(key);
  return it == exact_.end() ? nullptr : &patterns_[size_t(it->second)];
}

const FontAtlas& font_atlas(int h) {
  static std::mutex mu;
  static std::map<int, FontAtlas> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(h);
  if (it == cache.end()) it = cache.emplace(h, FontAtlas(h)).first;
  return it->second;
}

}  // namespace picd
