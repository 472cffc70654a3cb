#pragma once

// Rasterization of text layouts.
//
// render_glyph draws the layout as a single-channel image, ink at 1.0 on a
// 0.0 background: the deterministic conditioning map handed to the decoder.
// draw_word is the same blit against an RGB canvas with an arbitrary ink
// color; the corpus generator uses it so that rendered samples and the
// conditioning map share one code path pixel for pixel.

#include "picd/tensor.hpp"
#include "picd/text.hpp"

namespace picd {

// {1, canvas_h, canvas_w}, values exactly 0.0 or 1.0. Ink outside the
// canvas is clipped. Identical layouts produce identical tensors.
Tensorf render_glyph(const TextLayout& layout);

void draw_word(Tensorf& img, const WordRecord& word, const float rgb[3]);

// Ink mask of a single word placed at its layout position, same clipping
// as render_glyph; used by the extractor to verify a parse covers every
// observed ink pixel.
void stamp_word(std::vector<uint8_t>& mask, int canvas_w, int canvas_h,
                const WordRecord& word);

}  // namespace picd
