// Deterministic line plots rendered straight to pixels.
//
// The sweep runner emits rate-distortion charts as PNGs. Rendering uses
// the same glyph rasterizer as the codec's conditioning maps, integer
// line drawing, and fixed margins, so a given set of series always
// produces the identical file byte for byte.

#pragma once

#include <string>
#include <vector>

#include "picd/tensor.hpp"

namespace picd {

struct PlotSeries {
  std::string label;                        // legend text, plot alphabet only
  std::vector<std::pair<double, double>> points;  // (x, y), any order
  float rgb[3] = {0.0f, 0.0f, 0.0f};
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  int width = 480;
  int height = 320;
};

// Rasterizes the chart to {3, height, width} in [0,1]. Axis ranges come
// from the data with a small symmetric pad; each series is drawn as line
// segments between its points in x-sorted order plus 3x3 point markers.
// Throws std::invalid_argument when no series has a point or a label uses
// characters outside the glyph alphabet (spaces are allowed and skipped).
Tensorf render_plot(const PlotSpec& spec);

// render_plot + PNG encode + write. The PNG encoder is deterministic, so
// equal specs give byte-identical files.
void write_plot(const std::string& path, const PlotSpec& spec);

}  // namespace picd
