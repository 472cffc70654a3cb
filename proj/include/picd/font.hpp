#pragma once

// Fixed monospace bitmap font.
//
// The base face is a 5x7 bitmap per character, stored column-major with
// bit k of each column byte addressing row k from the top. Rendering at a
// requested pixel height h scales the base bitmap: nearest neighbor when
// upscaling, OR-pooling when downscaling (h = 6 is the only downscale in
// the supported range, and plain nearest neighbor there would drop a base
// row entirely and merge distinct characters).
//
// FontAtlas precomputes the scaled patterns for one height along with the
// lookup structures the extractor needs: an exact pattern index and the
// distinct ink offsets used to enumerate cell alignment candidates.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "picd/text.hpp"

namespace picd {

constexpr int kFontBaseW = 5;
constexpr int kFontBaseH = 7;
constexpr int kMinGlyphHeight = 6;
constexpr int kMaxGlyphHeight = 16;

// Column bytes of the base bitmap; c must be in [0x20, 0x7e].
const uint8_t* font_columns(char c);

// Scaled glyph cell geometry. Width tracks the 5:7 aspect of the base
// face; spacing is the inter-cell gap inside a word.
inline int glyph_width(int h) {
  const int w = (10 * h + 7) / 14;  // round(5h/7)
  return w < 1 ? 1 : w;
}

inline int glyph_spacing(int h) {
  const int s = (2 * h + 7) / 14;  // round(h/7)
  return s < 1 ? 1 : s;
}

inline int glyph_advance(int h) { return glyph_width(h) + glyph_spacing(h); }

// Width of an n-character word: n cells minus the trailing gap.
inline int word_width(int n, int h) {
  return n > 0 ? n * glyph_advance(h) - glyph_spacing(h) : 0;
}

inline int word_width(const std::string& s, int h) {
  return word_width(int(s.size()), h);
}

// Row-major h x glyph_width(h) bitmap of c scaled to height h, one byte
// per pixel, values 0 or 1.
std::vector<uint8_t> glyph_bitmap(char c, int h);

struct GlyphPattern {
  char ch = 0;
  int w = 0;
  int h = 0;
  std::vector<uint8_t> bits;  // row-major, 0/1
  int top_off = 0;            // first row containing ink
  int left_off = 0;           // first column containing ink
  int bottom_gap = 0;         // empty rows below the ink
  int right_gap = 0;          // empty columns right of the ink
};

class FontAtlas {
 public:
  explicit FontAtlas(int h);

  int height() const { return h_; }
  int width() const { return w_; }
  int advance() const { return adv_; }
  int spacing() const { return adv_ - w_; }

  const GlyphPattern& pattern(char c) const;

  // Exact lookup of a w x h cell bitmap; nullptr when no glyph matches.
  const GlyphPattern* match_exact(const std::vector<uint8_t>& bits) const;

  // Sorted distinct ink offsets across the alphabet, used to turn an ink
  // bounding box into candidate cell origins.
  const std::vector<int>& top_offsets() const { return top_offsets_; }
  const std::vector<int>& left_offsets() const { return left_offsets_; }
  int max_left_offset() const { return left_offsets_.back(); }
  int max_right_gap() const { return max_right_gap_; }

 private:
  int h_, w_, adv_;
  std::vector<GlyphPattern> patterns_;
  std::unordered_map<std::string, int> exact_;
  std::vector<int> top_offsets_;
  std::vector<int> left_offsets_;
  int max_right_gap_ = 0;
};

// Shared per-height atlas cache; construction is deterministic so the
// cache is purely an optimization.
const FontAtlas& font_atlas(int h);

}  // namespace picd
