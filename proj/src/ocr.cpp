#include "picd/ocr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "picd/font.hpp"
#include "picd/glyph.hpp"

namespace picd {
namespace {

constexpr int kBandGap = 8;   // empty rows that separate bands
constexpr int kWordGap = 13;  // empty columns that separate words
constexpr int kQuadrant = 8;  // corner-anchored window reach (9x9 windows)
constexpr int kBoxPad = 3;    // guard band kept around the ink bounding box

std::vector<float> luminance(const Tensorf& img, int& H, int& W) {
  if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
    throw std::runtime_error("extract: image must be {1|3, H, W}");
  H = img.dim(1);
  W = img.dim(2);
  std::vector<float> L(size_t(H) * size_t(W));
  if (img.dim(0) == 1) {
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) L[size_t(r) * size_t(W) + size_t(c)] = img(0, r, c);
  } else {
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        L[size_t(r) * size_t(W) + size_t(c)] =
            0.299f * img(0, r, c) + 0.587f * img(1, r, c) + 0.114f * img(2, r, c);
  }
  return L;
}

float median_of(std::vector<float>& v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + long(mid), v.end());
  return v[mid];
}

// A pixel is ink when it deviates from the median of all four
// corner-anchored windows. Flat pixels exit after the first window.
std::vector<uint8_t> detect_ink(const std::vector<float>& L, int H, int W, float tau) {
  std::vector<uint8_t> active(L.size(), 0);
  std::vector<float> win;
  win.reserve(size_t(kQuadrant + 1) * size_t(kQuadrant + 1));
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const float v = L[size_t(r) * size_t(W) + size_t(c)];
      float mind = std::numeric_limits<float>::max();
      for (int qr = 0; qr < 2 && mind > tau; ++qr)
        for (int qc = 0; qc < 2 && mind > tau; ++qc) {
          const int r0 = qr == 0 ? std::max(0, r - kQuadrant) : r;
          const int r1 = qr == 0 ? r : std::min(H - 1, r + kQuadrant);
          const int c0 = qc == 0 ? std::max(0, c - kQuadrant) : c;
          const int c1 = qc == 0 ? c : std::min(W - 1, c + kQuadrant);
          win.clear();
          for (int rr = r0; rr <= r1; ++rr)
            for (int cc = c0; cc <= c1; ++cc)
              win.push_back(L[size_t(rr) * size_t(W) + size_t(cc)]);
          mind = std::min(mind, std::abs(v - median_of(win)));
        }
      active[size_t(r) * size_t(W) + size_t(c)] = mind > tau ? 1 : 0;
    }
  return active;
}

// Maximal runs of set entries, merging runs closer than gap.
std::vector<std::pair<int, int>> runs_of(const std::vector<uint8_t>& on, int gap) {
  std::vector<std::pair<int, int>> out;
  int i = 0;
  const int n = int(on.size());
  while (i < n) {
    if (!on[size_t(i)]) {
      ++i;
      continue;
    }
    int j = i, last = i;
    while (j < n && j - last < gap) {
      if (on[size_t(j)]) last = j;
      ++j;
    }
    out.emplace_back(i, last);
    i = last + 1;
  }
  return out;
}

struct InkBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive ink bounds
  int ex0 = 0, ey0 = 0, ew = 0, eh = 0;  // guarded box (clipped to canvas)
  std::vector<uint8_t> ink;              // ew*eh mask

  bool empty() const { return x1 < x0; }

  // Canvas coordinates; anything outside the guard box reads as empty, so
  // ink belonging to other regions can never leak into a cell comparison.
  uint8_t at(int r, int c) const {
    if (r < ey0 || r >= ey0 + eh || c < ex0 || c >= ex0 + ew) return 0;
    return ink[size_t(r - ey0) * size_t(ew) + size_t(c - ex0)];
  }
};

// Re-binarize a detected segment against the median of a ring just
// outside it. On a clean render the ring is pure local background, so the
// resulting mask is exact; it also erases detection artifacts, whose
// pixels match the true background by definition.
InkBox binarize_box(const std::vector<float>& L, int H, int W, int r0, int r1,
                    int c0, int c1, float tau) {
  InkBox box;
  box.ey0 = std::max(0, r0 - kBoxPad);
  box.ex0 = std::max(0, c0 - kBoxPad);
  const int ey1 = std::min(H - 1, r1 + kBoxPad);
  const int ex1 = std::min(W - 1, c1 + kBoxPad);
  box.eh = ey1 - box.ey0 + 1;
  box.ew = ex1 - box.ex0 + 1;

  std::vector<float> ring;
  const int rr0 = box.ey0 - 1, rr1 = ey1 + 1, rc0 = box.ex0 - 1, rc1 = ex1 + 1;
  for (int r = rr0; r <= rr1; ++r)
    for (int c = rc0; c <= rc1; ++c) {
      if (r != rr0 && r != rr1 && c != rc0 && c != rc1) continue;
      if (r < 0 || r >= H || c < 0 || c >= W) continue;
      ring.push_back(L[size_t(r) * size_t(W) + size_t(c)]);
    }
  if (ring.empty())  // box spans the whole canvas; fall back to its border
    for (int r = box.ey0; r <= ey1; ++r)
      for (int c = box.ex0; c <= ex1; ++c)
        if (r == box.ey0 || r == ey1 || c == box.ex0 || c == ex1)
          ring.push_back(L[size_t(r) * size_t(W) + size_t(c)]);
  const float bg = median_of(ring);

  box.ink.assign(size_t(box.ew) * size_t(box.eh), 0);
  box.x0 = W;
  box.y0 = H;
  for (int r = 0; r < box.eh; ++r)
    for (int c = 0; c < box.ew; ++c) {
      const int cr = box.ey0 + r, cc = box.ex0 + c;
      if (std::abs(L[size_t(cr) * size_t(W) + size_t(cc)] - bg) <= tau) continue;
      box.ink[size_t(r) * size_t(box.ew) + size_t(c)] = 1;
      box.x0 = std::min(box.x0, cc);
      box.x1 = std::max(box.x1, cc);
      box.y0 = std::min(box.y0, cr);
      box.y1 = std::max(box.y1, cr);
    }
  return box;
}

std::vector<uint8_t> cell_bits(const InkBox& box, int cy, int cx, int h, int gw) {
  std::vector<uint8_t> bits(size_t(h) * size_t(gw));
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < gw; ++c)
      bits[size_t(r) * size_t(gw) + size_t(c)] = box.at(cy + r, cx + c);
  return bits;
}

bool span_matches(const InkBox& box, const WordRecord& w, int H, int W) {
  std::vector<uint8_t> stamp(size_t(W) * size_t(H), 0);
  stamp_word(stamp, W, H, w);
  for (int r = box.ey0; r < box.ey0 + box.eh; ++r)
    for (int c = box.ex0; c < box.ex0 + box.ew; ++c)
      if (stamp[size_t(r) * size_t(W) + size_t(c)] != box.at(r, c)) return false;
  return true;
}

// Candidate cell-grid geometry shared by both parse passes.
struct Grid {
  int h, gw, adv, s, y, x, n_lo, n_max;
};

template <typename F>
void for_each_grid(const InkBox& box, int H, int W, F&& f) {
  const int span_w = box.x1 - box.x0 + 1;
  const int bbox_h = box.y1 - box.y0 + 1;
  for (int h = std::max(kMinGlyphHeight, bbox_h); h <= kMaxGlyphHeight; ++h) {
    const FontAtlas& atlas = font_atlas(h);
    const int gw = atlas.width(), adv = atlas.advance(), s = atlas.spacing();
    for (int dy : atlas.top_offsets()) {
      const int y = box.y0 - dy;
      if (y < 0 || y + h > H) continue;
      for (int dx : atlas.left_offsets()) {
        const int x = box.x0 - dx;
        if (x < 0) continue;
        // n*adv = span + s + dx + rgap for the unknown right gap.
        const int n_lo = (span_w + s + dx + adv - 1) / adv;
        int n_max = (span_w + s + dx + atlas.max_right_gap()) / adv;
        n_max = std::min(n_max, (W - x + s) / adv);
        n_max = std::min(n_max, kMaxWordLen);
        if (n_max < n_lo || n_lo < 1) continue;
        f(atlas, Grid{h, gw, adv, s, y, x, n_lo, n_max});
      }
    }
  }
}

bool parse_exact(const InkBox& box, int H, int W, WordRecord& out) {
  bool found = false;
  for_each_grid(box, H, W, [&](const FontAtlas& atlas, const Grid& g) {
    if (found) return;
    std::string content;
    for (int i = 0; i < g.n_max && !found; ++i) {
      const GlyphPattern* p =
          atlas.match_exact(cell_bits(box, g.y, g.x + i * g.adv, g.h, g.gw));
      if (!p) break;
      content.push_back(p->ch);
      if (i + 1 < g.n_lo) continue;
      WordRecord w{content, g.x, g.y, g.h};
      if (span_matches(box, w, H, W)) {
        out = w;
        found = true;
      }
    }
  });
  return found;
}

// Normalized cross-correlation parse for near-clean renders. Each cell
// takes its best-correlating glyph; a candidate scores the mean over its
// cells and the best candidate wins if it clears the confidence bar.
bool parse_ncc(const InkBox& box, int H, int W, float conf, WordRecord& out,
               float& best_conf) {
  best_conf = -1.0f;
  WordRecord best;
  for_each_grid(box, H, W, [&](const FontAtlas& atlas, const Grid& g) {
    const size_t cell_px = size_t(g.h) * size_t(g.gw);
    std::vector<char> chars;
    std::vector<float> scores;
    for (int i = 0; i < g.n_max; ++i) {
      const std::vector<uint8_t> bits = cell_bits(box, g.y, g.x + i * g.adv, g.h, g.gw);
      float am = 0;
      for (uint8_t b : bits) am += float(b);
      am /= float(cell_px);
      const float sa = std::sqrt(std::max(0.0f, am - am * am) * float(cell_px));
      char bc = '?';
      float bs = -1.0f;
      for (int a = 0; a < kAlphabetSize; ++a) {
        const char ch = char(kAlphabetFirst + a);
        const GlyphPattern& p = atlas.pattern(ch);
        float bm = 0, dot = 0;
        for (size_t k = 0; k < cell_px; ++k) {
          bm += float(p.bits[k]);
          dot += float(bits[k]) * float(p.bits[k]);
        }
        bm /= float(cell_px);
        const float sb = std::sqrt(std::max(0.0f, bm - bm * bm) * float(cell_px));
        float score;
        if (sa < 1e-6f || sb < 1e-6f)
          score = sa < 1e-6f && sb < 1e-6f && std::abs(am - bm) < 1e-6f ? 1.0f : 0.0f;
        else
          score = (dot - float(cell_px) * am * bm) / (sa * sb);
        if (score > bs) {
          bs = score;
          bc = ch;
        }
      }
      chars.push_back(bc);
      scores.push_back(bs);
      if (i + 1 < g.n_lo) continue;
      float mean = 0;
      for (float v : scores) mean += v;
      mean /= float(scores.size());
      if (mean > best_conf) {
        best_conf = mean;
        best = WordRecord{std::string(chars.begin(), chars.end()), g.x, g.y, g.h};
      }
    }
  });
  if (best_conf < conf) return false;
  out = best;
  return true;
}

}  // namespace

ExtractResult extract(const Tensorf& image, const ExtractOptions& opt) {
  int H = 0, W = 0;
  std::vector<float> L = luminance(image, H, W);
  const std::vector<uint8_t> active = detect_ink(L, H, W, opt.ink_threshold);

  ExtractResult res;
  res.layout.canvas_w = W;
  res.layout.canvas_h = H;

  std::vector<uint8_t> row_on(size_t(H), 0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (active[size_t(r) * size_t(W) + size_t(c)]) {
        row_on[size_t(r)] = 1;
        break;
      }

  for (const auto& [r0, r1] : runs_of(row_on, kBandGap)) {
    std::vector<uint8_t> col_on(size_t(W), 0);
    for (int c = 0; c < W; ++c)
      for (int r = r0; r <= r1; ++r)
        if (active[size_t(r) * size_t(W) + size_t(c)]) {
          col_on[size_t(c)] = 1;
          break;
        }
    for (const auto& [c0, c1] : runs_of(col_on, kWordGap)) {
      // Tight active bounds within the segment.
      int ar0 = r1 + 1, ar1 = r0 - 1;
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
          if (active[size_t(r) * size_t(W) + size_t(c)]) {
            ar0 = std::min(ar0, r);
            ar1 = std::max(ar1, r);
          }
      if (ar1 < ar0) continue;
      const InkBox box = binarize_box(L, H, W, ar0, ar1, c0, c1, opt.ink_threshold);
      if (box.empty()) continue;  // detection artifact; ring says background

      WordRecord w;
      if (parse_exact(box, H, W, w)) {
        res.layout.words.push_back(w);
        continue;
      }
      float conf = 0;
      if (parse_ncc(box, H, W, opt.confidence, w, conf)) {
        res.layout.words.push_back(w);
        ++res.inexact;
      } else {
        ++res.dropped;
      }
    }
  }

  std::stable_sort(res.layout.words.begin(), res.layout.words.end(),
                   [](const WordRecord& a, const WordRecord& b) {
                     return a.y != b.y ? a.y < b.y : a.x < b.x;
                   });
  return res;
}

}  // namespace picd
