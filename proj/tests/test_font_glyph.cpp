#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "picd/font.hpp"
#include "picd/glyph.hpp"
#include "picd/png_io.hpp"
#include "picd/tensor.hpp"

using namespace picd;

TEST_CASE("glyph cell geometry tracks the 5:7 base face") {
  for (int h = 1; h <= 24; ++h) {
    CHECK(glyph_width(h) == std::max<long>(1, std::lround(5.0 * h / 7.0)));
    CHECK(glyph_spacing(h) == std::max<long>(1, std::lround(h / 7.0)));
    CHECK(glyph_advance(h) == glyph_width(h) + glyph_spacing(h));
  }
  CHECK(word_width(0, 8) == 0);
  CHECK(word_width(1, 8) == glyph_width(8));
  CHECK(word_width(3, 8) == 3 * glyph_advance(8) - glyph_spacing(8));
  CHECK(word_width(std::string("abc"), 8) == word_width(3, 8));
}

TEST_CASE("glyph bitmaps have the advertised shape and binary values") {
  for (int h : {1, 3, 6, 8, 11, 16}) {
    const std::vector<uint8_t> bits = glyph_bitmap('Q', h);
    CHECK(int(bits.size()) == h * glyph_width(h));
    for (uint8_t b : bits) CHECK((b == 0 || b == 1));
  }
  CHECK_THROWS_AS(glyph_bitmap('A', 0), std::runtime_error);
  CHECK_THROWS_AS(font_columns(char(0x1f)), std::runtime_error);
  CHECK_THROWS_AS(font_columns(char(0x7f)), std::runtime_error);
}

TEST_CASE("atlas patterns are distinct, inked, and exactly matchable at every height") {
  for (int h = kMinGlyphHeight; h <= kMaxGlyphHeight; ++h) {
    const FontAtlas& atlas = font_atlas(h);
    CHECK(atlas.height() == h);
    CHECK(atlas.width() == glyph_width(h));
    CHECK(atlas.advance() == glyph_advance(h));
    CHECK(atlas.spacing() == glyph_spacing(h));

    std::set<std::string> seen;
    int max_right = 0;
    for (char c = kAlphabetFirst; c <= kAlphabetLast; ++c) {
      const GlyphPattern& p = atlas.pattern(c);
      CHECK(p.ch == c);
      CHECK(p.bits == glyph_bitmap(c, h));
      seen.insert(std::string(p.bits.begin(), p.bits.end()));

      int ink = 0;
      for (uint8_t b : p.bits) ink += b;
      CHECK(ink > 0);
      CHECK(p.top_off >= 0);
      CHECK(p.left_off >= 0);
      CHECK(p.bottom_gap >= 0);
      CHECK(p.right_gap >= 0);
      max_right = std::max(max_right, p.right_gap);

      const GlyphPattern* m = atlas.match_exact(p.bits);
      REQUIRE(m != nullptr);
      CHECK(m->ch == c);
    }
    CHECK(int(seen.size()) == kAlphabetSize);
    CHECK(atlas.max_right_gap() == max_right);

    const std::vector<uint8_t> blank(size_t(h) * size_t(glyph_width(h)), 0);
    CHECK(atlas.match_exact(blank) == nullptr);

    CHECK(std::is_sorted(atlas.top_offsets().begin(), atlas.top_offsets().end()));
    CHECK(std::is_sorted(atlas.left_offsets().begin(), atlas.left_offsets().end()));
    CHECK(atlas.max_left_offset() == atlas.left_offsets().back());
  }
  CHECK_THROWS_AS(font_atlas(8).pattern(' '), std::runtime_error);
}

TEST_CASE("empty layout renders to an all-zero glyph image") {
  TextLayout z;
  z.canvas_w = 32;
  z.canvas_h = 24;
  const Tensorf g = render_glyph(z);
  REQUIRE(g.rank() == 3);
  CHECK(g.dim(0) == 1);
  CHECK(g.dim(1) == 24);
  CHECK(g.dim(2) == 32);
  CHECK(g.flat().cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("the letter A at height 8 matches its golden bitmap") {
  const TextLayout z{16, 16, {{"A", 0, 0, 8}}};
  const Tensorf g = render_glyph(z);

  const char* art[16] = {
      ".####...........",
      "#....#..........",
      "#....#..........",
      "#....#..........",
      "#....#..........",
      "######..........",
      "#....#..........",
      "#....#..........",
      "................",
      "................",
      "................",
      "................",
      "................",
      "................",
      "................",
      "................"};
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c)
      CHECK(g(0, r, c) == (art[r][c] == '#' ? 1.0f : 0.0f));

  const Tensorf golden = read_png(std::string(PICD_TESTS_DATA_DIR) + "/glyph_A_h8.png");
  REQUIRE(golden.shape() == g.shape());
  CHECK(all_equal(golden, g));
}

TEST_CASE("rendering is deterministic and strictly binary") {
  TextLayout z{64, 64, {{"Mix3d!", 5, 9, 11}, {"pq", 30, 40, 6}, {"_", 50, 2, 16}}};
  const Tensorf a = render_glyph(z);
  const Tensorf b = render_glyph(z);
  CHECK(all_equal(a, b));
  for (Eigen::Index i = 0; i < a.size(); ++i)
    CHECK((a[i] == 0.0f || a[i] == 1.0f));
  CHECK(a.flat().sum() > 0.0f);
}

TEST_CASE("ink past the right edge is clipped, not wrapped") {
  const WordRecord w{"WW", 12, 4, 8};
  const TextLayout small{16, 16, {w}};
  const TextLayout big{64, 64, {w}};
  const Tensorf gs = render_glyph(small);
  const Tensorf gb = render_glyph(big);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) CHECK(gs(0, r, c) == gb(0, r, c));
  // The big canvas really does carry ink beyond column 16.
  float beyond = 0.0f;
  for (int r = 0; r < 64; ++r)
    for (int c = 16; c < 64; ++c) beyond += gb(0, r, c);
  CHECK(beyond > 0.0f);
}

TEST_CASE("glyph map, color drawing, and stamp masks share one rasterization") {
  const TextLayout z{48, 32, {{"Shared", 3, 4, 9}, {"path", 3, 18, 7}}};
  const Tensorf mask = render_glyph(z);

  Tensorf canvas({3, 32, 48});
  const float white[3] = {1.0f, 1.0f, 1.0f};
  for (const WordRecord& w : z.words) draw_word(canvas, w, white);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 48; ++c)
      for (int ch = 0; ch < 3; ++ch) CHECK(canvas(ch, r, c) == mask(0, r, c));

  std::vector<uint8_t> stamp(size_t(48) * 32, 0);
  for (const WordRecord& w : z.words) stamp_word(stamp, 48, 32, w);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 48; ++c)
      CHECK((stamp[size_t(r) * 48 + size_t(c)] != 0) == (mask(0, r, c) == 1.0f));
}
