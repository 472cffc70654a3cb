#include "picd/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "picd/font.hpp"
#include "picd/glyph.hpp"
#include "picd/ocr.hpp"
#include "picd/png_io.hpp"
#include "picd/rng.hpp"

namespace picd {
namespace {

constexpr int kGuard = 6;         // word cell rect to region border / panel
constexpr int kPanelClear = 10;   // panel-to-panel and panel-to-edge clearance
constexpr int kBandGapCells = 10; // vertical gap between band cell rows
constexpr int kWordGapCells = 16; // horizontal gap between word cell rects
constexpr int kMaxDraws = 12;

// Disjoint luminance ranges: ink always contrasts with every background.
constexpr float kBgLumLo = 0.55f, kBgLumHi = 1.0f;
constexpr float kInkLumLo = 0.0f, kInkLumHi = 0.2f;

float lum_of(const int rgb[3]) {
  return (0.299f * float(rgb[0]) + 0.587f * float(rgb[1]) + 0.114f * float(rgb[2])) /
         255.0f;
}

void sample_color(Rng& rng, float lo, float hi, int out[3]) {
  for (int tries = 0; tries < 4096; ++tries) {
    out[0] = rng.uniform_int(0, 255);
    out[1] = rng.uniform_int(0, 255);
    out[2] = rng.uniform_int(0, 255);
    const float l = lum_of(out);
    if (l >= lo && l <= hi) return;
  }
  const int v = int(255.0f * (lo + hi) * 0.5f);
  out[0] = out[1] = out[2] = v;
}

struct Rect {
  int x, y, w, h;
};

int rect_gap_1d(int a0, int a1, int b0, int b1) {  // half-open intervals
  if (a1 <= b0) return b0 - a1;
  if (b1 <= a0) return a0 - b1;
  return -1;  // overlap
}

bool rects_clear(const Rect& a, const Rect& b, int gap) {
  const int gx = rect_gap_1d(a.x, a.x + a.w, b.x, b.x + b.w);
  const int gy = rect_gap_1d(a.y, a.y + a.h, b.y, b.y + b.h);
  if (gx < 0 && gy < 0) return false;  // overlap
  return std::max(gx, gy) >= gap;
}

void fill_rect(Tensorf& img, const Rect& r, const int rgb[3]) {
  for (int c = 0; c < 3; ++c) {
    const float v = float(rgb[c]) / 255.0f;
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) img(c, y, x) = v;
  }
}

struct Band {
  int y, h;
};

ScreenSample draw_once(Rng& rng, const GeneratorOptions& opt) {
  ScreenSample s;
  const int cs = opt.canvas;
  s.layout.canvas_w = cs;
  s.layout.canvas_h = cs;

  const bool light = rng.uniform() < (opt.invert_theme ? 0.15 : 0.85);
  const float bg_lo = light ? kBgLumLo : kInkLumLo;
  const float bg_hi = light ? kBgLumHi : kInkLumHi;
  const float ink_lo = light ? kInkLumLo : kBgLumLo;
  const float ink_hi = light ? kInkLumHi : kBgLumHi;

  sample_color(rng, bg_lo, bg_hi, s.base_rgb);

  // Panels: non-overlapping, kept clear of each other and either flush
  // with or clear of the canvas edge, so every flat pixel has at least
  // one fully same-colored detection window.
  const int n_panels = rng.uniform_int(1, 3);
  for (int p = 0; p < n_panels; ++p) {
    for (int tries = 0; tries < 40; ++tries) {
      Rect r;
      r.w = rng.uniform_int(22, std::max(22, cs * 2 / 3));
      r.h = rng.uniform_int(22, std::max(22, cs * 2 / 3));
      if (r.w > cs || r.h > cs) continue;
      r.x = rng.uniform_int(0, cs - r.w);
      r.y = rng.uniform_int(0, cs - r.h);
      if (r.x < kPanelClear) r.x = 0;
      if (r.x > cs - r.w - kPanelClear) r.x = cs - r.w;
      if (r.y < kPanelClear) r.y = 0;
      if (r.y > cs - r.h - kPanelClear) r.y = cs - r.h;
      bool ok = true;
      for (const Panel& q : s.panels)
        if (!rects_clear(r, Rect{q.x, q.y, q.w, q.h}, kPanelClear)) {
          ok = false;
          break;
        }
      if (!ok) continue;
      Panel pn;
      pn.x = r.x;
      pn.y = r.y;
      pn.w = r.w;
      pn.h = r.h;
      sample_color(rng, bg_lo, bg_hi, pn.rgb);
      s.panels.push_back(pn);
      break;
    }
  }

  // Horizontal bands; words in one band share the top edge, bands are
  // vertically separated so the extractor's row segmentation must split.
  std::vector<Band> bands;
  int y = kGuard + rng.uniform_int(0, 8);
  const int n_bands = rng.uniform_int(2, 4);
  while (int(bands.size()) < n_bands) {
    const int bh = rng.uniform_int(kMinGlyphHeight, kMaxGlyphHeight);
    if (y + bh + kGuard > cs) break;
    bands.push_back({y, bh});
    y += bh + kBandGapCells + rng.uniform_int(0, 6);
  }

  // Placement regions: the base page plus each panel.
  std::vector<Rect> regions;
  regions.push_back({0, 0, cs, cs});
  for (const Panel& p : s.panels) regions.push_back({p.x, p.y, p.w, p.h});

  const int target = rng.uniform_int(opt.min_words, opt.max_words);
  std::vector<int> word_band;
  for (int k = 0; k < target && !bands.empty(); ++k) {
    bool placed = false;
    for (int tries = 0; tries < 25 && !placed; ++tries) {
      const int bi = rng.uniform_int(0, int(bands.size()) - 1);
      const Band& band = bands[size_t(bi)];
      const int h = rng.uniform_int(kMinGlyphHeight, band.h);
      const int len = rng.uniform_int(opt.min_len, opt.max_len);
      std::string content(size_t(len), '?');
      for (char& ch : content)
        ch = char(rng.uniform_int(int(kAlphabetFirst), int(kAlphabetLast)));
      const int ww = word_width(len, h);

      std::vector<int> eligible;
      for (size_t ri = 0; ri < regions.size(); ++ri) {
        const Rect& r = regions[ri];
        if (r.y + kGuard <= band.y && band.y + band.h <= r.y + r.h - kGuard &&
            r.w >= ww + 2 * kGuard)
          eligible.push_back(int(ri));
      }
      if (eligible.empty()) continue;
      const int ri = eligible[size_t(rng.uniform_int(0, int(eligible.size()) - 1))];
      const Rect& r = regions[size_t(ri)];
      const int x = r.x + kGuard + rng.uniform_int(0, r.w - 2 * kGuard - ww);

      // Base-page words keep their guard box away from every panel.
      const Rect guard{x - kGuard, band.y - kGuard, ww + 2 * kGuard,
                       band.h + 2 * kGuard};
      bool ok = true;
      if (ri == 0)
        for (const Panel& p : s.panels)
          if (rect_gap_1d(guard.x, guard.x + guard.w, p.x, p.x + p.w) < 0 &&
              rect_gap_1d(guard.y, guard.y + guard.h, p.y, p.y + p.h) < 0) {
            ok = false;
            break;
          }
      // Words sharing a band stay far enough apart to split.
      for (size_t wi = 0; wi < s.layout.words.size() && ok; ++wi) {
        if (word_band[wi] != bi) continue;
        const WordRecord& w2 = s.layout.words[wi];
        const int w2w = word_width(w2.content, w2.h);
        if (rect_gap_1d(x, x + ww, w2.x, w2.x + w2w) < kWordGapCells) ok = false;
      }
      if (!ok) continue;

      s.layout.words.push_back({content, x, band.y, h});
      word_band.push_back(bi);
      placed = true;
    }
    if (!placed) ++s.shortfall;
  }

  // Raster order before rendering so layout equality is order-insensitive.
  std::vector<size_t> order(s.layout.words.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const WordRecord&wa = s.layout.words[a], &wb = s.layout.words[b];
    return wa.y != wb.y ? wa.y < wb.y : wa.x < wb.x;
  });
  std::vector<WordRecord> sorted;
  for (size_t i : order) sorted.push_back(s.layout.words[i]);
  s.layout.words = std::move(sorted);

  s.image = Tensorf({3, cs, cs});
  fill_rect(s.image, {0, 0, cs, cs}, s.base_rgb);
  for (const Panel& p : s.panels) fill_rect(s.image, {p.x, p.y, p.w, p.h}, p.rgb);
  for (const WordRecord& w : s.layout.words) {
    int ink[3];
    sample_color(rng, ink_lo, ink_hi, ink);
    const float rgb[3] = {float(ink[0]) / 255.0f, float(ink[1]) / 255.0f,
                          float(ink[2]) / 255.0f};
    draw_word(s.image, w, rgb);
  }
  return s;
}

std::string index_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", i);
  return buf;
}

std::string layout_text(const TextLayout& z) {
  std::ostringstream os;
  for (const WordRecord& w : z.words)
    os << w.content << ' ' << w.x << ' ' << w.y << ' ' << w.h << '\n';
  return os.str();
}

TextLayout parse_layout_text(const std::string& text, int canvas) {
  TextLayout z;
  z.canvas_w = canvas;
  z.canvas_h = canvas;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    WordRecord w;
    if (!(ls >> w.content >> w.x >> w.y >> w.h))
      throw std::runtime_error("corpus: malformed layout line '" + line + "'");
    z.words.push_back(w);
  }
  validate_layout(z);
  return z;
}

}  // namespace

ScreenSample make_sample(uint64_t seed, int index, const GeneratorOptions& opt) {
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    Rng rng(mix_seed(mix_seed(seed, uint64_t(index)), uint64_t(attempt)));
    ScreenSample s = draw_once(rng, opt);
    const ExtractResult er = extract(s.image);
    if (er.dropped == 0 && er.inexact == 0 && er.layout == s.layout) {
      s.attempts = attempt + 1;
      return s;
    }
  }
  throw std::runtime_error("corpus: sample " + std::to_string(index) +
                           " failed oracle verification after " +
                           std::to_string(kMaxDraws) + " draws");
}

CorpusManifest generate_corpus(const std::string& dir, uint64_t seed, int n,
                               const GeneratorOptions& opt) {
  if (n < 1) throw std::runtime_error("corpus: sample count must be positive");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "img");
  fs::create_directories(fs::path(dir) / "layout");

  CorpusManifest m;
  m.dir = dir;
  m.seed = seed;
  m.count = n;
  m.canvas = opt.canvas;
  for (int i = 0; i < n; ++i) {
    const ScreenSample s = make_sample(seed, i, opt);
    m.redrawn += s.attempts - 1;
    m.shortfall += s.shortfall;

    SampleRef ref;
    ref.image_path = "img/" + index_name(i) + ".png";
    ref.layout_path = "layout/" + index_name(i) + ".txt";
    const std::vector<uint8_t> png = png_encode(s.image);
    write_file((fs::path(dir) / ref.image_path).string(), png);
    ref.image_crc = crc32_of(png);
    const std::string lt = layout_text(s.layout);
    const std::vector<uint8_t> lt_bytes(lt.begin(), lt.end());
    write_file((fs::path(dir) / ref.layout_path).string(), lt_bytes);
    ref.layout_crc = crc32_of(lt_bytes);
    ref.panels = s.panels;
    for (int c = 0; c < 3; ++c) ref.base_rgb[c] = s.base_rgb[c];
    m.samples.push_back(std::move(ref));
  }

  std::ostringstream os;
  os << "picd_corpus 1\n";
  os << "seed " << m.seed << '\n';
  os << "count " << m.count << '\n';
  os << "canvas " << m.canvas << '\n';
  os << "alphabet_first " << int(kAlphabetFirst) << '\n';
  os << "alphabet_last " << int(kAlphabetLast) << '\n';
  os << "shortfall " << m.shortfall << '\n';
  os << "redrawn " << m.redrawn << '\n';
  for (int i = 0; i < n; ++i) {
    const SampleRef& r = m.samples[size_t(i)];
    os << "sample " << i << ' ' << r.image_path << ' ' << r.image_crc << ' '
       << r.layout_path << ' ' << r.layout_crc << '\n';
    os << "base " << i << ' ' << r.base_rgb[0] << ' ' << r.base_rgb[1] << ' '
       << r.base_rgb[2] << '\n';
    os << "panels " << i << ' ' << r.panels.size();
    for (const Panel& p : r.panels)
      os << ' ' << p.x << ' ' << p.y << ' ' << p.w << ' ' << p.h << ' ' << p.rgb[0]
         << ' ' << p.rgb[1] << ' ' << p.rgb[2];
    os << '\n';
  }
  const std::string mt = os.str();
  write_file((fs::path(dir) / "manifest.txt").string(),
             std::vector<uint8_t>(mt.begin(), mt.end()));
  return m;
}

CorpusManifest load_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(dir) / "manifest.txt").string();
  const std::vector<uint8_t> bytes = read_file(path);
  std::istringstream is(std::string(bytes.begin(), bytes.end()));

  CorpusManifest m;
  m.dir = dir;
  std::string key;
  if (!(is >> key) || key != "picd_corpus")
    throw std::runtime_error("corpus: " + path + " is not a corpus manifest");
  int version = 0;
  is >> version;
  if (version != 1)
    throw std::runtime_error("corpus: unsupported manifest version " +
                             std::to_string(version));
  auto need = [&](auto& v, const char* what) {
    if (!(is >> v))
      throw std::runtime_error("corpus: manifest missing " + std::string(what));
  };
  int af = 0, al = 0;
  while (is >> key) {
    if (key == "seed") need(m.seed, "seed");
    else if (key == "count") need(m.count, "count");
    else if (key == "canvas") need(m.canvas, "canvas");
    else if (key == "alphabet_first") need(af, "alphabet_first");
    else if (key == "alphabet_last") need(al, "alphabet_last");
    else if (key == "shortfall") need(m.shortfall, "shortfall");
    else if (key == "redrawn") need(m.redrawn, "redrawn");
    else if (key == "sample") {
      int idx = 0;
      SampleRef r;
      need(idx, "sample index");
      if (idx != int(m.samples.size()))
        throw std::runtime_error("corpus: manifest samples out of order");
      need(r.image_path, "image path");
      need(r.image_crc, "image crc");
      need(r.layout_path, "layout path");
      need(r.layout_crc, "layout crc");
      m.samples.push_back(std::move(r));
    } else if (key == "base") {
      int idx = 0;
      need(idx, "base index");
      if (idx < 0 || idx >= int(m.samples.size()))
        throw std::runtime_error("corpus: base entry without sample");
      SampleRef& r = m.samples[size_t(idx)];
      need(r.base_rgb[0], "base r");
      need(r.base_rgb[1], "base g");
      need(r.base_rgb[2], "base b");
    } else if (key == "panels") {
      int idx = 0;
      size_t count = 0;
      need(idx, "panels index");
      if (idx < 0 || idx >= int(m.samples.size()))
        throw std::runtime_error("corpus: panels entry without sample");
      need(count, "panel count");
      SampleRef& r = m.samples[size_t(idx)];
      r.panels.resize(count);
      for (Panel& p : r.panels) {
        need(p.x, "panel x");
        need(p.y, "panel y");
        need(p.w, "panel w");
        need(p.h, "panel h");
        need(p.rgb[0], "panel r");
        need(p.rgb[1], "panel g");
        need(p.rgb[2], "panel b");
      }
    } else {
      throw std::runtime_error("corpus: unknown manifest key '" + key + "'");
    }
  }
  if (int(m.samples.size()) != m.count)
    throw std::runtime_error("corpus: manifest lists " +
                             std::to_string(m.samples.size()) + " samples, expected " +
                             std::to_string(m.count));
  if (af != int(kAlphabetFirst) || al != int(kAlphabetLast))
    throw std::runtime_error("corpus: manifest alphabet does not match this build");
  return m;
}

ScreenSample load_sample(const CorpusManifest& m, int index) {
  if (index < 0 || index >= int(m.samples.size()))
    throw std::runtime_error("corpus: sample index out of range");
  namespace fs = std::filesystem;
  const SampleRef& r = m.samples[size_t(index)];

  const std::string ipath = (fs::path(m.dir) / r.image_path).string();
  const std::vector<uint8_t> png = read_file(ipath);
  if (crc32_of(png) != r.image_crc)
    throw std::runtime_error("corpus: checksum mismatch for " + ipath);

  const std::string lpath = (fs::path(m.dir) / r.layout_path).string();
  const std::vector<uint8_t> lbytes = read_file(lpath);
  if (crc32_of(lbytes) != r.layout_crc)
    throw std::runtime_error("corpus: checksum mismatch for " + lpath);

  ScreenSample s;
  s.image = png_decode(png.data(), png.size());
  if (s.image.dim(0) != 3 || s.image.dim(1) != m.canvas || s.image.dim(2) != m.canvas)
    throw std::runtime_error("corpus: " + ipath + " has unexpected dimensions");
  s.layout = parse_layout_text(std::string(lbytes.begin(), lbytes.end()), m.canvas);
  s.panels = r.panels;
  for (int c = 0; c < 3; ++c) s.base_rgb[c] = r.base_rgb[c];
  return s;
}

}  // namespace picd
