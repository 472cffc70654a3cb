#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "picd/rng.hpp"
#include "picd/text.hpp"

using namespace picd;

namespace {

TextLayout random_layout(Rng& rng, int max_words = 40) {
  TextLayout z;
  z.canvas_w = rng.uniform_int(8, 700);
  z.canvas_h = rng.uniform_int(16, 700);
  const int n = rng.uniform_int(0, max_words);
  for (int i = 0; i < n; ++i) {
    WordRecord w;
    const int len = rng.uniform_int(1, kMaxWordLen);
    for (int k = 0; k < len; ++k)
      w.content.push_back(char(rng.uniform_int(kAlphabetFirst, kAlphabetLast)));
    w.h = rng.uniform_int(1, z.canvas_h);
    w.y = rng.uniform_int(0, z.canvas_h - w.h);
    w.x = rng.uniform_int(0, z.canvas_w - 1);
    z.words.push_back(w);
  }
  return z;
}

TextLayout roundtrip(const TextLayout& z) {
  return decode_text_section(encode_text_section(z), z.canvas_w, z.canvas_h);
}

}  // namespace

TEST_CASE("text section round-trips the empty layout") {
  TextLayout z;
  z.canvas_w = 64;
  z.canvas_h = 64;
  CHECK(roundtrip(z) == z);
}

TEST_CASE("text section round-trips simple layouts") {
  TextLayout z{64, 64, {{"Hello!", 2, 3, 8}, {"world", 2, 20, 8}}};
  CHECK(roundtrip(z) == z);

  // Single-character words and edge coordinates.
  TextLayout edge{16, 16, {{"#", 15, 0, 16}, {"~", 0, 15, 1}}};
  CHECK(roundtrip(edge) == edge);
}

TEST_CASE("text section round-trips 2000 fuzzed layouts") {
  Rng rng(101);
  for (int i = 0; i < 2000; ++i) {
    const TextLayout z = random_layout(rng);
    CHECK(roundtrip(z) == z);
  }
}

TEST_CASE("layout validation names the offending word") {
  TextLayout z{64, 64, {{"ok", 0, 0, 8}, {"bad word", 0, 20, 8}}};
  CHECK_THROWS_WITH_AS(encode_text_section(z),
                       "text: word 1 contains unsupported character code 32",
                       std::runtime_error);

  TextLayout empty_word{64, 64, {{"", 0, 0, 8}}};
  CHECK_THROWS_AS(encode_text_section(empty_word), std::runtime_error);

  TextLayout long_word{64, 64, {{std::string(65, 'a'), 0, 0, 8}}};
  CHECK_THROWS_AS(encode_text_section(long_word), std::runtime_error);

  TextLayout flat{64, 64, {{"x", 0, 0, 0}}};
  CHECK_THROWS_AS(encode_text_section(flat), std::runtime_error);

  TextLayout outside{64, 64, {{"x", 64, 0, 8}}};
  CHECK_THROWS_AS(encode_text_section(outside), std::runtime_error);

  TextLayout below{64, 64, {{"x", 0, 60, 8}}};
  CHECK_THROWS_AS(encode_text_section(below), std::runtime_error);

  TextLayout no_canvas{0, 64, {}};
  CHECK_THROWS_AS(encode_text_section(no_canvas), std::runtime_error);
}

TEST_CASE("fifty words on a 512 canvas cost under 0.05 bpp") {
  Rng rng(103);
  TextLayout z;
  z.canvas_w = z.canvas_h = 512;
  for (int i = 0; i < 50; ++i) {
    WordRecord w;
    const int len = rng.uniform_int(1, 8);
    for (int k = 0; k < len; ++k)
      w.content.push_back(char(rng.uniform_int(kAlphabetFirst, kAlphabetLast)));
    w.h = rng.uniform_int(6, 16);
    w.x = rng.uniform_int(0, 511);
    w.y = rng.uniform_int(0, 512 - w.h);
    z.words.push_back(w);
  }
  CHECK(text_section_bpp(z) < 0.05);
  CHECK(text_section_bpp(z) ==
        8.0 * double(encode_text_section(z).size()) / (512.0 * 512.0));
}

TEST_CASE("text section golden vectors") {
  const TextLayout g1{64, 64, {{"Hi!", 3, 5, 8}}};
  const std::vector<uint8_t> b1 = {0x46, 0x48, 0x31, 0x41, 0xff, 0x40, 0x38,
                                   0xb1, 0xe0, 0x5d, 0x35, 0x96, 0x4c};
  CHECK(encode_text_section(g1) == b1);
  CHECK(decode_text_section(b1, 64, 64) == g1);

  const TextLayout g2{
      128, 96, {{"load", 4, 10, 8}, {"save", 40, 10, 8}, {"quit?", 4, 30, 12}}};
  const std::vector<uint8_t> b2 = {0x20, 0x48, 0x6c, 0x12, 0xdd, 0xc4, 0xd8, 0xec,
                                   0xaa, 0xe1, 0xfa, 0x61, 0x3a, 0x89, 0xac, 0x26,
                                   0x33, 0x17, 0xb0, 0x12, 0x15, 0x1e, 0x04, 0x9c,
                                   0x09, 0x00, 0xa4, 0x48, 0x99, 0x0f, 0xa7, 0x92};
  CHECK(encode_text_section(g2) == b2);
  CHECK(decode_text_section(b2, 128, 96) == g2);

  const TextLayout g3{512,
                      512,
                      {{":U}<p_k$", 189, 0, 7},
                       {"S2\"{As", 321, 20, 12},
                       {"\">9,O", 350, 40, 8},
                       {"t619oGL?", 234, 60, 15},
                       {"R'rM^1", 133, 80, 10}}};
  const std::vector<uint8_t> b3 = {
      0x30, 0x2b, 0x3a, 0x2d, 0xfb, 0x98, 0x3a, 0xe7, 0xef, 0xf3, 0x10, 0x29,
      0xba, 0x27, 0x68, 0x55, 0x91, 0xc7, 0xc9, 0x67, 0x3d, 0x96, 0x06, 0xe0,
      0x24, 0x36, 0x53, 0xe7, 0x22, 0xdf, 0x5d, 0x16, 0xe0, 0xd2, 0x54, 0x2b,
      0x30, 0xff, 0xef, 0xd6, 0x45, 0x02, 0xa8, 0x50, 0x00, 0xbd, 0xc6, 0x80,
      0x42, 0x41, 0x48, 0xb0, 0x76, 0x0a, 0x44, 0x00, 0xe8, 0x05, 0x23, 0xc0,
      0x65, 0x02, 0x91, 0x40, 0x70, 0xb1, 0x08, 0xb1};
  CHECK(encode_text_section(g3) == b3);
  CHECK(decode_text_section(b3, 512, 512) == g3);
}

TEST_CASE("every single-bit flip in a text section is detected") {
  Rng rng(107);
  for (int trial = 0; trial < 20; ++trial) {
    const TextLayout z = random_layout(rng, 10);
    const std::vector<uint8_t> enc = encode_text_section(z);
    for (size_t bit = 0; bit < 8 * enc.size(); ++bit) {
      std::vector<uint8_t> bad = enc;
      bad[bit >> 3] ^= uint8_t(0x80u >> (bit & 7));
      CHECK_THROWS_AS(decode_text_section(bad, z.canvas_w, z.canvas_h),
                      std::runtime_error);
    }
  }
}

TEST_CASE("truncated text sections are detected") {
  Rng rng(109);
  for (int trial = 0; trial < 50; ++trial) {
    const TextLayout z = random_layout(rng, 10);
    const std::vector<uint8_t> enc = encode_text_section(z);
    for (size_t cut = 0; cut < enc.size(); ++cut) {
      const std::vector<uint8_t> pre(enc.begin(), enc.begin() + long(cut));
      CHECK_THROWS_AS(decode_text_section(pre, z.canvas_w, z.canvas_h),
                      std::runtime_error);
    }
  }
}

TEST_CASE("container round-trips and reports bpp by definition") {
  Rng rng(113);
  for (int trial = 0; trial < 300; ++trial) {
    PicdContainer c;
    c.mode = (trial % 2 == 0) ? CodecMode::kScreen : CodecMode::kNatural;
    c.canvas_w = rng.uniform_int(1, 2000);
    c.canvas_h = rng.uniform_int(1, 2000);
    if (c.mode == CodecMode::kScreen)
      for (int i = rng.uniform_int(0, 50); i > 0; --i)
        c.text_section.push_back(uint8_t(rng.uniform_int(0, 255)));
    for (int i = rng.uniform_int(0, 200); i > 0; --i)
      c.image_section.push_back(uint8_t(rng.uniform_int(0, 255)));

    const std::vector<uint8_t> bytes = serialize_container(c);
    CHECK(parse_container(bytes) == c);
    CHECK(container_bpp(c) ==
          8.0 * double(bytes.size()) / (double(c.canvas_w) * double(c.canvas_h)));
  }
}

TEST_CASE("container serialized layout golden") {
  PicdContainer c;
  c.mode = CodecMode::kScreen;
  c.canvas_w = 3;
  c.canvas_h = 2;
  c.text_section = {0xaa};
  c.image_section = {0xbb, 0xcc};
  const std::vector<uint8_t> want = {'P', 'I', 'C', 'D', 0x01, 0x00, 0x00, 0x03,
                                     0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0xaa,
                                     0x00, 0x00, 0x00, 0x02, 0xbb, 0xcc};
  CHECK(serialize_container(c) == want);
  CHECK(parse_container(want) == c);
}

TEST_CASE("container parser rejects damage") {
  PicdContainer c;
  c.canvas_w = 8;
  c.canvas_h = 8;
  c.image_section = {1, 2, 3};
  const std::vector<uint8_t> good = serialize_container(c);

  std::vector<uint8_t> bad_magic = good;
  bad_magic[0] = 'Q';
  CHECK_THROWS_WITH_AS(parse_container(bad_magic), "container: bad magic",
                       std::runtime_error);

  std::vector<uint8_t> bad_version = good;
  bad_version[4] = 9;
  CHECK_THROWS_AS(parse_container(bad_version), std::runtime_error);

  std::vector<uint8_t> bad_mode = good;
  bad_mode[5] = 7;
  CHECK_THROWS_AS(parse_container(bad_mode), std::runtime_error);

  std::vector<uint8_t> trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_container(trailing), std::runtime_error);

  for (size_t cut = 0; cut < good.size(); ++cut)
    CHECK_THROWS_AS(
        parse_container(std::vector<uint8_t>(good.begin(), good.begin() + long(cut))),
        std::runtime_error);

  // Natural mode must not carry a text section.
  PicdContainer nat;
  nat.mode = CodecMode::kNatural;
  nat.canvas_w = nat.canvas_h = 8;
  nat.text_section = {1};
  std::vector<uint8_t> nat_bytes = serialize_container(nat);
  CHECK_THROWS_AS(parse_container(nat_bytes), std::runtime_error);

  PicdContainer zero;
  CHECK_THROWS_AS(serialize_container(zero), std::runtime_error);
}
