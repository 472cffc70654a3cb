#include "picd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "picd/font.hpp"
#include "picd/glyph.hpp"
#include "picd/png_io.hpp"
#include "picd/text.hpp"

namespace picd {

namespace {

constexpr int kMarginL = 48;
constexpr int kMarginR = 14;
constexpr int kMarginT = 24;
constexpr int kMarginB = 36;
constexpr int kTextH = 7;  // glyph cell height used for every label

void put(Tensorf& img, int x, int y, const float rgb[3]) {
  if (x < 0 || y < 0 || x >= img.dim(2) || y >= img.dim(1)) return;
  for (int c = 0; c < 3; ++c) img(c, y, x) = rgb[c];
}

void fill_rect(Tensorf& img, int x0, int y0, int x1, int y1, const float rgb[3]) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) put(img, x, y, rgb);
}

void line(Tensorf& img, int x0, int y0, int x1, int y1, const float rgb[3]) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(img, x0, y0, rgb);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
}

int text_width(const std::string& s) {
  if (s.empty()) return 0;
  return int(s.size()) * glyph_advance(kTextH) - glyph_spacing(kTextH);
}

void draw_text(Tensorf& img, int x, int y, const std::string& s, const float rgb[3]) {
  const int adv = glyph_advance(kTextH);
  for (char c : s) {
    if (c != ' ') {
      if (c < kAlphabetFirst || c > kAlphabetLast)
        throw std::invalid_argument("plot: label character outside the glyph alphabet");
      WordRecord w{std::string(1, c), x, y, kTextH};
      draw_word(img, w, rgb);
    }
    x += adv;
  }
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct AxisRange {
  double lo = 0.0, hi = 1.0;
  double map(double v, int px0, int px1, bool flip) const {
    const double t = (v - lo) / (hi - lo);
    const double p = px0 + t * (px1 - px0);
    return flip ? px1 - (p - px0) : p;
  }
};

AxisRange fit_range(double lo, double hi) {
  if (!(lo < hi)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

Tensorf render_plot(const PlotSpec& spec) {
  bool any = false;
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  for (const auto& s : spec.series)
    for (const auto& [x, y] : s.points) {
      if (!any) {
        xlo = xhi = x;
        ylo = yhi = y;
        any = true;
      }
      xlo = std::min(xlo, x), xhi = std::max(xhi, x);
      ylo = std::min(ylo, y), yhi = std::max(yhi, y);
    }
  if (!any) throw std::invalid_argument("plot: no data points");
  if (spec.width < 160 || spec.height < 120)
    throw std::invalid_argument("plot: canvas too small");

  Tensorf img({3, spec.height, spec.width});
  img.flat().setConstant(1.0f);

  const int px0 = kMarginL, px1 = spec.width - 1 - kMarginR;
  const int py0 = kMarginT, py1 = spec.height - 1 - kMarginB;
  const AxisRange rx = fit_range(xlo, xhi);
  const AxisRange ry = fit_range(ylo, yhi);

  const float black[3] = {0.0f, 0.0f, 0.0f};
  const float gray[3] = {0.82f, 0.82f, 0.82f};

  // Grid and ticks at quarter fractions of the padded range.
  for (int k = 0; k <= 4; ++k) {
    const double tx = rx.lo + (rx.hi - rx.lo) * k / 4.0;
    const double ty = ry.lo + (ry.hi - ry.lo) * k / 4.0;
    const int gx = int(std::lround(rx.map(tx, px0, px1, false)));
    const int gy = int(std::lround(ry.map(ty, py0, py1, true)));
    if (k > 0 && k < 4) {
      line(img, gx, py0, gx, py1, gray);
      line(img, px0, gy, px1, gy, gray);
    }
    line(img, gx, py1 + 1, gx, py1 + 3, black);
    line(img, px0 - 3, gy, px0 - 1, gy, black);
    const std::string xs = fmt_tick(tx), ys = fmt_tick(ty);
    draw_text(img, gx - text_width(xs) / 2, py1 + 6, xs, black);
    draw_text(img, px0 - 5 - text_width(ys), gy - kTextH / 2, ys, black);
  }

  // Axes on top of the grid.
  line(img, px0, py0, px0, py1, black);
  line(img, px0, py1, px1, py1, black);

  draw_text(img, (px0 + px1 - text_width(spec.title)) / 2, 6, spec.title, black);
  draw_text(img, (px0 + px1 - text_width(spec.x_label)) / 2, spec.height - 1 - kTextH - 6,
            spec.x_label, black);
  draw_text(img, 4, 6, spec.y_label, black);

  for (const auto& s : spec.series) {
    auto pts = s.points;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    int lastx = 0, lasty = 0;
    bool have_last = false;
    for (const auto& [x, y] : pts) {
      const int ix = int(std::lround(rx.map(x, px0, px1, false)));
      const int iy = int(std::lround(ry.map(y, py0, py1, true)));
      if (have_last) line(img, lastx, lasty, ix, iy, s.rgb);
      fill_rect(img, ix - 1, iy - 1, ix + 1, iy + 1, s.rgb);
      lastx = ix, lasty = iy;
      have_last = true;
    }
  }

  // Legend rows in the top-right corner of the plot area.
  int ly = py0 + 4;
  for (const auto& s : spec.series) {
    const int lw = 14 + text_width(s.label);
    const int lx = px1 - 4 - lw;
    fill_rect(img, lx, ly + 1, lx + 9, ly + kTextH - 2, s.rgb);
    draw_text(img, lx + 14, ly, s.label, black);
    ly += kTextH + 5;
  }
  return img;
}

void write_plot(const std::string& path, const PlotSpec& spec) {
  write_png(path, render_plot(spec));
}

}  // namespace picd
