#pragma once

// Minimal PNG reading and writing over zlib.
//
// Covers exactly what the project produces and consumes: 8-bit grayscale
// and truecolor, non-interlaced. The writer emits unfiltered scanlines;
// the reader handles all five standard filters plus alpha variants (alpha
// is dropped on load). Palette and 16-bit files are rejected with an error.

#include <cstdint>
#include <string>
#include <vector>

#include "picd/tensor.hpp"

namespace picd {

// img is {1,H,W} or {3,H,W} in [0,1]; values are clamped and quantized to
// 8 bits with round-to-nearest.
std::vector<uint8_t> png_encode(const Tensorf& img);
void write_png(const std::string& path, const Tensorf& img);

// Returns {1,H,W} or {3,H,W} in [0,1].
Tensorf png_decode(const uint8_t* data, size_t size);
Tensorf read_png(const std::string& path);

uint32_t crc32_of(const std::vector<uint8_t>& data);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& data);

}  // namespace picd
