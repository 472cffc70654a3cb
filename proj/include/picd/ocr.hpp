#pragma once

// Oracle text extraction.
//
// The extractor reads screen-style images rendered with the repo font and
// recovers the TextLayout. Stages:
//
//   1. Ink detection. A pixel is ink when its luminance deviates from the
//      local background in all four corner-anchored 9x9 median windows.
//      Taking the minimum deviation over the four quadrants means a flat
//      pixel near a region corner still sees one window filled with its
//      own region, so hard panel edges produce no false positives.
//   2. Segmentation. Active rows split into bands at gaps of 8 or more
//      empty rows; bands split into words at gaps of 13 or more empty
//      columns. Both thresholds clear the widest legitimate internal gaps
//      of the font by a margin.
//   3. Per-word binarization. The median of a ring just outside the word
//      box gives the true local background; ink is any pixel deviating
//      from it. This mask is exact on clean renders.
//   4. Parsing. Candidate cell grids (height, vertical and horizontal ink
//      offset, character count) are enumerated from the ink bounding box
//      and the font's offset tables. A candidate is accepted when every
//      cell matches a glyph bitmap exactly and the stamped word equals
//      the observed mask over the whole box; otherwise the best
//      normalized-correlation parse is accepted above a confidence
//      threshold. Remaining regions are dropped and counted.

#include "picd/tensor.hpp"
#include "picd/text.hpp"

namespace picd {

struct ExtractOptions {
  float ink_threshold = 0.15f;  // luminance deviation that marks ink
  float confidence = 0.8f;      // correlation acceptance for inexact parses
};

struct ExtractResult {
  TextLayout layout;  // parsed words in raster order (y, then x)
  int dropped = 0;    // ink regions that failed both parse paths
  int inexact = 0;    // words accepted by correlation, not exact match
};

// image is {3, H, W} or {1, H, W} with values in [0, 1].
ExtractResult extract(const Tensorf& image, const ExtractOptions& opt = {});

}  // namespace picd
