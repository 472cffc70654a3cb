#include "picd/glyph.hpp"

#include "picd/font.hpp"

namespace picd {

namespace {

// Visits every ink pixel of the word as canvas coordinates, already
// clipped; fn(x, y) must accept in-canvas coordinates only.
template <typename Fn>
void for_each_ink_pixel(const WordRecord& word, int canvas_w, int canvas_h, Fn&& fn) {
  const FontAtlas& atlas = font_atlas(word.h);
  const int w = atlas.width();
  for (size_t k = 0; k < word.content.size(); ++k) {
    const GlyphPattern& p = atlas.pattern(word.content[k]);
    const int x0 = word.x + int(k) * atlas.advance();
    for (int j = 0; j < word.h; ++j) {
      const int y = word.y + j;
      if (y < 0 || y >= canvas_h) continue;
      for (int i = 0; i < w; ++i) {
        const int x = x0 + i;
        if (x < 0 || x >= canvas_w) continue;
        if (p.bits[size_t(j) * size_t(w) + size_t(i)]) fn(x, y);
      }
    }
  }
}

}  // namespace

Tensorf render_glyph(const TextLayout& layout) {
  validate_layout(layout);
  Tensorf img({1, layout.canvas_h, layout.canvas_w});
  for (const WordRecord& word : layout.words)
    for_each_ink_pixel(word, layout.canvas_w, layout.canvas_h,
                       [&](int x, int y) { img(0, y, x) = 1.0f; });
  return img;
}

void draw_word(Tensorf& img, const WordRecord& word, const float rgb[3]) {
  const int canvas_h = img.dim(1), canvas_w = img.dim(2);
  for_each_ink_pixel(word, canvas_w, canvas_h, [&](int x, int y) {
    for (int c = 0; c < 3; ++c) img(c, y, x) = rgb[c];
  });
}

void stamp_word(std::vector<uint8_t>& mask, int canvas_w, int canvas_h,
                const WordRecord& word) {
  for_each_ink_pixel(word, canvas_w, canvas_h,
                     [&](int x, int y) { mask[size_t(y) * size_t(canvas_w) + size_t(x)] = 1; });
}

}  // namespace picd
