#pragma once

// Lossless text-lane coding and the on-disk container.
//
// A TextLayout is the exact text content of a screen image: each word's
// characters plus the geometry needed to redraw it (left edge, top edge,
// pixel height). Serialization separates the two streams: contents are
// arithmetic coded with an adaptive byte model, geometry is delta + zigzag
// + exp-Golomb coded. Both are exactly invertible; any corruption decodes
// to a thrown std::runtime_error, never to a silently wrong layout.

#include <cstdint>
#include <string>
#include <vector>

namespace picd {

// Printable ASCII minus space: the renderable alphabet.
constexpr char kAlphabetFirst = 0x21;
constexpr char kAlphabetLast = 0x7e;
constexpr int kAlphabetSize = kAlphabetLast - kAlphabetFirst + 1;  // 94

constexpr int kMaxWordLen = 64;

inline bool char_supported(char c) {
  return c >= kAlphabetFirst && c <= kAlphabetLast;
}

struct WordRecord {
  std::string content;  // non-empty, alphabet characters only
  int x = 0;            // left edge of the first glyph cell, pixels
  int y = 0;            // top edge of the glyph cells, pixels
  int h = 0;            // glyph cell height, pixels

  bool operator==(const WordRecord&) const = default;
};

struct TextLayout {
  int canvas_w = 0;
  int canvas_h = 0;
  std::vector<WordRecord> words;

  bool operator==(const TextLayout&) const = default;
};

// Throws std::runtime_error naming the offending word if any record is
// empty, holds unsupported characters, or has nonsensical geometry.
void validate_layout(const TextLayout& layout);

// Geometry-only serialization; canvas size travels in the container header.
std::vector<uint8_t> encode_text_section(const TextLayout& layout);
TextLayout decode_text_section(const uint8_t* data, size_t size,
                               int canvas_w, int canvas_h);
TextLayout decode_text_section(const std::vector<uint8_t>& data,
                               int canvas_w, int canvas_h);

// Bits spent on the text section per canvas pixel.
double text_section_bpp(const TextLayout& layout);

enum class CodecMode : uint8_t { kScreen = 0, kNatural = 1 };

struct PicdContainer {
  uint8_t version = 1;
  CodecMode mode = CodecMode::kScreen;
  int canvas_w = 0;
  int canvas_h = 0;
  std::vector<uint8_t> text_section;   // empty in natural mode
  std::vector<uint8_t> image_section;

  bool operator==(const PicdContainer&) const = default;
};

std::vector<uint8_t> serialize_container(const PicdContainer& c);
PicdContainer parse_container(const uint8_t* data, size_t size);
PicdContainer parse_container(const std::vector<uint8_t>& data);

// Total coded size in bits per pixel: 8 * serialized bytes / (w*h).
double container_bpp(const PicdContainer& c);

}  // namespace picd
