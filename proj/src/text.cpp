#include "picd/text.hpp"

#include <stdexcept>

#include "picd/arith.hpp"
#include "picd/bits.hpp"
#include "picd/png_io.hpp"

namespace picd {

namespace {

constexpr uint8_t kMagic[4] = {'P', 'I', 'C', 'D'};

void fail(const std::string& what) { throw std::runtime_error(what); }

}  // namespace

void validate_layout(const TextLayout& layout) {
  if (layout.canvas_w <= 0 || layout.canvas_h <= 0)
    fail("text: layout has empty canvas");
  for (size_t i = 0; i < layout.words.size(); ++i) {
    const WordRecord& w = layout.words[i];
    const std::string where = "text: word " + std::to_string(i);
    if (w.content.empty()) fail(where + " has empty content");
    if (w.content.size() > kMaxWordLen) fail(where + " is longer than 64 characters");
    for (char c : w.content)
      if (!char_supported(c))
        fail(where + " contains unsupported character code " +
             std::to_string(int(uint8_t(c))));
    if (w.h <= 0) fail(where + " has non-positive height");
    if (w.x < 0 || w.y < 0 || w.x >= layout.canvas_w || w.y >= layout.canvas_h)
      fail(where + " starts outside the canvas");
    if (w.y + w.h > layout.canvas_h) fail(where + " extends below the canvas");
  }
}

// Section layout, MSB-first bits:
//   expG(word_count)
//   if word_count > 0:
//     expG(byte length of the arith block), align, arith block
//       (word contents joined with 0x00 separators; 0x00 is outside the
//       alphabet, so the split back into words is unambiguous)
//     expG(zigzag(x_0)) expG(zigzag(y_0)) expG(zigzag(h_0 - 1))
//     then per word i>0 the deltas against word i-1, zigzag + expG coded.
//   zero-pad to a byte boundary, then CRC-32 of everything above (4 bytes,
//     big-endian). A wrong layout must never come out of a damaged section,
//     and the bit codes alone cannot promise that: a flipped geometry bit
//     can decode to a different in-canvas position.
// Word contents cluster tightly under the adaptive model; geometry deltas
// are small because extraction emits words in raster order.
std::vector<uint8_t> encode_text_section(const TextLayout& layout) {
  validate_layout(layout);
  BitWriter w;
  exp_golomb_encode(layout.words.size(), w);
  if (!layout.words.empty()) {
    std::vector<uint8_t> contents;
    for (size_t i = 0; i < layout.words.size(); ++i) {
      if (i > 0) contents.push_back(0);
      const std::string& s = layout.words[i].content;
      contents.insert(contents.end(), s.begin(), s.end());
    }
    const std::vector<uint8_t> block = arith_encode_bytes(contents);
    exp_golomb_encode(block.size(), w);
    w.put_bytes(block);
    int px = 0, py = 0, ph = 1;
    for (const WordRecord& word : layout.words) {
      exp_golomb_encode(zigzag_encode(word.x - px), w);
      exp_golomb_encode(zigzag_encode(word.y - py), w);
      exp_golomb_encode(zigzag_encode(word.h - ph), w);
      px = word.x;
      py = word.y;
      ph = word.h;
    }
  }
  w.align();
  std::vector<uint8_t> out = w.bytes();
  const uint32_t crc = crc32_of(out);
  for (int s = 24; s >= 0; s -= 8) out.push_back(uint8_t((crc >> s) & 0xff));
  return out;
}

TextLayout decode_text_section(const uint8_t* data, size_t size,
                               int canvas_w, int canvas_h) {
  if (size < 5) fail("text: section truncated");
  const size_t body = size - 4;
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored = (stored << 8) | data[body + i];
  if (crc32_of(std::vector<uint8_t>(data, data + body)) != stored)
    fail("text: section checksum mismatch");

  BitReader r(data, body);
  TextLayout layout;
  layout.canvas_w = canvas_w;
  layout.canvas_h = canvas_h;
  const uint64_t count = exp_golomb_decode(r);
  if (count > uint64_t(canvas_w) * uint64_t(canvas_h))
    fail("text: implausible word count");
  if (count > 0) {
    const uint64_t block_len = exp_golomb_decode(r);
    const std::vector<uint8_t> block = r.get_bytes(size_t(block_len));
    const std::vector<uint8_t> contents = arith_decode_bytes(block);
    std::vector<std::string> pieces(1);
    for (uint8_t b : contents) {
      if (b == 0) pieces.emplace_back();
      else pieces.back().push_back(char(b));
    }
    if (pieces.size() != count) fail("text: word count does not match contents");

    layout.words.resize(count);
    int px = 0, py = 0, ph = 1;
    for (uint64_t i = 0; i < count; ++i) {
      WordRecord& word = layout.words[i];
      word.content = std::move(pieces[i]);
      px = word.x = px + int(zigzag_decode(exp_golomb_decode(r)));
      py = word.y = py + int(zigzag_decode(exp_golomb_decode(r)));
      ph = word.h = ph + int(zigzag_decode(exp_golomb_decode(r)));
    }
  }
  r.align();
  if (r.bit_pos() != 8 * body) fail("text: trailing bytes in section");
  validate_layout(layout);
  return layout;
}

TextLayout decode_text_section(const std::vector<uint8_t>& data,
                               int canvas_w, int canvas_h) {
  return decode_text_section(data.data(), data.size(), canvas_w, canvas_h);
}

double text_section_bpp(const TextLayout& layout) {
  const double bits = 8.0 * double(encode_text_section(layout).size());
  return bits / (double(layout.canvas_w) * double(layout.canvas_h));
}

// Container bytes:
//   "PICD" | version u8 | mode u8 | canvas_w u16be | canvas_h u16be
//   | text length u32be | text bytes | image length u32be | image bytes
std::vector<uint8_t> serialize_container(const PicdContainer& c) {
  if (c.canvas_w <= 0 || c.canvas_h <= 0 || c.canvas_w > 0xffff || c.canvas_h > 0xffff)
    fail("container: canvas size out of range");
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  out.push_back(c.version);
  out.push_back(uint8_t(c.mode));
  auto put16 = [&out](int v) {
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v & 0xff));
  };
  auto put32 = [&out](size_t v) {
    if (v > 0xffffffffull) fail("container: section too large");
    for (int s = 24; s >= 0; s -= 8) out.push_back(uint8_t((v >> s) & 0xff));
  };
  put16(c.canvas_w);
  put16(c.canvas_h);
  put32(c.text_section.size());
  out.insert(out.end(), c.text_section.begin(), c.text_section.end());
  put32(c.image_section.size());
  out.insert(out.end(), c.image_section.begin(), c.image_section.end());
  return out;
}

PicdContainer parse_container(const uint8_t* data, size_t size) {
  size_t pos = 0;
  auto need = [&](size_t n) {
    if (pos > size || size - pos < n) fail("container: truncated");
  };
  need(10);
  for (int i = 0; i < 4; ++i)
    if (data[i] != kMagic[i]) fail("container: bad magic");
  PicdContainer c;
  c.version = data[4];
  if (c.version != 1) fail("container: unsupported version " + std::to_string(c.version));
  if (data[5] > 1) fail("container: unknown mode byte");
  c.mode = CodecMode(data[5]);
  c.canvas_w = (data[6] << 8) | data[7];
  c.canvas_h = (data[8] << 8) | data[9];
  if (c.canvas_w == 0 || c.canvas_h == 0) fail("container: empty canvas");
  pos = 10;
  auto get32 = [&]() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data[pos++];
    return v;
  };
  const uint32_t text_len = get32();
  need(text_len);
  c.text_section.assign(data + pos, data + pos + text_len);
  pos += text_len;
  const uint32_t image_len = get32();
  need(image_len);
  c.image_section.assign(data + pos, data + pos + image_len);
  pos += image_len;
  if (pos != size) fail("container: trailing bytes");
  if (c.mode == CodecMode::kNatural && !c.text_section.empty())
    fail("container: natural mode carries no text section");
  return c;
}

PicdContainer parse_container(const std::vector<uint8_t>& data) {
  return parse_container(data.data(), data.size());
}

double container_bpp(const PicdContainer& c) {
  const double bits = 8.0 * double(serialize_container(c).size());
  return bits / (double(c.canvas_w) * double(c.canvas_h));
}

}  // namespace picd
