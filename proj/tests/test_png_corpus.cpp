#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "picd/corpus.hpp"
#include "picd/ocr.hpp"
#include "picd/png_io.hpp"
#include "picd/rng.hpp"
#include "picd/tensor.hpp"

using namespace picd;
namespace fs = std::filesystem;

namespace {

Tensorf quantized_random(Rng& rng, std::vector<int> shape) {
  Tensorf t(std::move(shape));
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t[i] = float(rng.uniform_int(0, 255)) / 255.0f;
  return t;
}

bool layouts_equal(const TextLayout& a, const TextLayout& b) {
  if (a.canvas_w != b.canvas_w || a.canvas_h != b.canvas_h) return false;
  if (a.words.size() != b.words.size()) return false;
  for (size_t i = 0; i < a.words.size(); ++i) {
    const WordRecord& u = a.words[i];
    const WordRecord& v = b.words[i];
    if (u.content != v.content || u.x != v.x || u.y != v.y || u.h != v.h)
      return false;
  }
  return true;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("png roundtrip is exact on quantized images") {
  Rng rng(401);
  for (int trial = 0; trial < 6; ++trial) {
    const int ch = (trial % 2 == 0) ? 3 : 1;
    const int h = int(rng.uniform_int(1, 40));
    const int w = int(rng.uniform_int(1, 40));
    const Tensorf img = quantized_random(rng, {ch, h, w});
    const std::vector<uint8_t> bytes = png_encode(img);
    const Tensorf back = png_decode(bytes.data(), bytes.size());
    REQUIRE(back.shape() == img.shape());
    CHECK(all_equal(back, img));
  }
}

TEST_CASE("png encoding clamps and rounds to 8 bits") {
  Tensorf img({1, 2, 3});
  const float vals[6] = {-0.4f, 0.0f, 0.4999f, 0.5001f, 1.0f, 7.25f};
  for (int i = 0; i < 6; ++i) img[i] = vals[i];
  const std::vector<uint8_t> bytes = png_encode(img);
  const Tensorf back = png_decode(bytes.data(), bytes.size());
  for (int i = 0; i < 6; ++i) {
    const float q =
        std::nearbyint(std::min(1.0f, std::max(0.0f, vals[i])) * 255.0f) / 255.0f;
    CHECK(back[i] == q);
  }
}

TEST_CASE("png files survive a disk roundtrip") {
  const fs::path dir = fresh_dir("picd_png_io_test");
  fs::create_directories(dir);
  Rng rng(77);
  const Tensorf img = quantized_random(rng, {3, 17, 9});
  const std::string path = (dir / "t.png").string();
  write_png(path, img);
  CHECK(all_equal(read_png(path), img));

  const std::vector<uint8_t> raw = read_file(path);
  CHECK(raw == png_encode(img));
  write_file((dir / "copy.bin").string(), raw);
  CHECK(read_file((dir / "copy.bin").string()) == raw);
  CHECK_THROWS_WITH_AS(read_file((dir / "absent.bin").string()),
                       doctest::Contains("io: cannot open"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("damaged png data is rejected") {
  Rng rng(9);
  const Tensorf img = quantized_random(rng, {3, 8, 8});
  const std::vector<uint8_t> good = png_encode(img);

  std::vector<uint8_t> bad_magic = good;
  bad_magic[1] ^= 0xff;
  CHECK_THROWS_WITH_AS(png_decode(bad_magic.data(), bad_magic.size()),
                       "png: bad signature", std::runtime_error);

  for (size_t keep : {size_t(0), size_t(7), size_t(20), good.size() - 13}) {
    CHECK_THROWS_AS(png_decode(good.data(), keep), std::runtime_error);
  }

  std::vector<uint8_t> bad_depth = good;
  bad_depth[8 + 8 + 8] = 16;  // IHDR bit depth byte
  CHECK_THROWS_WITH_AS(png_decode(bad_depth.data(), bad_depth.size()),
                       "png: only 8-bit depth supported", std::runtime_error);

  std::vector<uint8_t> bad_color = good;
  bad_color[8 + 8 + 9] = 3;  // IHDR color type byte, 3 = palette
  CHECK_THROWS_WITH_AS(png_decode(bad_color.data(), bad_color.size()),
                       "png: unsupported color type", std::runtime_error);
}

TEST_CASE("crc32 matches the standard check value") {
  const std::string check = "123456789";
  CHECK(crc32_of(std::vector<uint8_t>(check.begin(), check.end())) == 0xcbf43926u);
  CHECK(crc32_of({}) == 0u);
}

TEST_CASE("samples are deterministic in seed and index") {
  const ScreenSample a = make_sample(7, 3);
  const ScreenSample b = make_sample(7, 3);
  CHECK(all_equal(a.image, b.image));
  CHECK(layouts_equal(a.layout, b.layout));
  CHECK(a.panels == b.panels);
  for (int k = 0; k < 3; ++k) CHECK(a.base_rgb[k] == b.base_rgb[k]);
  CHECK(a.attempts == b.attempts);
  CHECK(a.shortfall == b.shortfall);

  const ScreenSample c = make_sample(7, 4);
  const ScreenSample d = make_sample(8, 3);
  CHECK_FALSE(all_equal(a.image, c.image));
  CHECK_FALSE(all_equal(a.image, d.image));
}

TEST_CASE("the oracle extractor recovers every clean sample exactly") {
  GeneratorOptions opt;
  for (int i = 0; i < 20; ++i) {
    const ScreenSample s = make_sample(5, i, opt);
    REQUIRE(s.image.rank() == 3);
    CHECK(s.image.dim(0) == 3);
    CHECK(s.image.dim(1) == opt.canvas);
    CHECK(s.image.dim(2) == opt.canvas);

    const size_t placed = s.layout.words.size();
    CHECK(int(placed) + s.shortfall >= opt.min_words);
    CHECK(int(placed) + s.shortfall <= opt.max_words);
    CHECK(s.attempts >= 1);
    for (const WordRecord& w : s.layout.words) {
      CHECK(int(w.content.size()) >= opt.min_len);
      CHECK(int(w.content.size()) <= opt.max_len);
    }

    const ExtractResult r = extract(s.image);
    CHECK(layouts_equal(r.layout, s.layout));
    CHECK(r.dropped == 0);
    CHECK(r.inexact == 0);
  }
}

TEST_CASE("inverted-theme samples also verify and differ from the default") {
  GeneratorOptions inv;
  inv.invert_theme = true;
  const ScreenSample s = make_sample(5, 0, inv);
  const ExtractResult r = extract(s.image);
  CHECK(layouts_equal(r.layout, s.layout));
  CHECK(r.dropped == 0);
  CHECK_FALSE(all_equal(s.image, make_sample(5, 0).image));
}

TEST_CASE("sample pixels are 8-bit flat colors inside the canvas") {
  const ScreenSample s = make_sample(21, 2);
  for (Eigen::Index i = 0; i < s.image.size(); ++i) {
    const float v = s.image[i];
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    CHECK(v == std::nearbyint(v * 255.0f) / 255.0f);
  }
  for (const Panel& p : s.panels) {
    CHECK(p.x >= 0);
    CHECK(p.y >= 0);
    CHECK(p.w > 0);
    CHECK(p.h > 0);
    CHECK(p.x + p.w <= 64);
    CHECK(p.y + p.h <= 64);
    for (const Panel& q : s.panels) {
      if (&p == &q) continue;
      const bool apart = p.x + p.w <= q.x || q.x + q.w <= p.x ||
                         p.y + p.h <= q.y || q.y + q.h <= p.y;
      CHECK(apart);
    }
  }
}

TEST_CASE("corpus generation is byte-identical across runs") {
  const fs::path da = fresh_dir("picd_corpus_a");
  const fs::path db = fresh_dir("picd_corpus_b");
  const CorpusManifest ma = generate_corpus(da.string(), 1, 2);
  const CorpusManifest mb = generate_corpus(db.string(), 1, 2);

  CHECK(read_file((da / "manifest.txt").string()) ==
        read_file((db / "manifest.txt").string()));
  REQUIRE(ma.samples.size() == 2);
  REQUIRE(mb.samples.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(read_file((da / ma.samples[i].image_path).string()) ==
          read_file((db / mb.samples[i].image_path).string()));
    CHECK(read_file((da / ma.samples[i].layout_path).string()) ==
          read_file((db / mb.samples[i].layout_path).string()));
  }
  fs::remove_all(db);

  // Reload and compare against the in-memory result.
  const CorpusManifest lm = load_manifest(da.string());
  CHECK(lm.seed == ma.seed);
  CHECK(lm.count == ma.count);
  CHECK(lm.canvas == ma.canvas);
  CHECK(lm.shortfall == ma.shortfall);
  CHECK(lm.redrawn == ma.redrawn);
  REQUIRE(lm.samples.size() == ma.samples.size());
  for (size_t i = 0; i < lm.samples.size(); ++i) {
    CHECK(lm.samples[i].image_path == ma.samples[i].image_path);
    CHECK(lm.samples[i].image_crc == ma.samples[i].image_crc);
    CHECK(lm.samples[i].layout_crc == ma.samples[i].layout_crc);
    CHECK(lm.samples[i].panels == ma.samples[i].panels);
  }

  for (int i = 0; i < 2; ++i) {
    const ScreenSample s = load_sample(lm, i);
    const ExtractResult r = extract(s.image);
    CHECK(layouts_equal(r.layout, s.layout));
    CHECK(r.dropped == 0);
  }
  CHECK_THROWS_WITH_AS(load_sample(lm, 2), "corpus: sample index out of range",
                       std::runtime_error);
  fs::remove_all(da);
}

TEST_CASE("checksum tampering is detected on load") {
  const fs::path dir = fresh_dir("picd_corpus_tamper");
  const CorpusManifest m = generate_corpus(dir.string(), 4, 1);

  const std::string ipath = (dir / m.samples[0].image_path).string();
  std::vector<uint8_t> bytes = read_file(ipath);
  bytes.back() ^= 0x01;
  write_file(ipath, bytes);
  CHECK_THROWS_WITH_AS(load_sample(m, 0), doctest::Contains("checksum mismatch"),
                       std::runtime_error);

  bytes.back() ^= 0x01;
  write_file(ipath, bytes);
  CHECK_NOTHROW(load_sample(m, 0));

  const std::string lpath = (dir / m.samples[0].layout_path).string();
  std::vector<uint8_t> lb = read_file(lpath);
  lb.push_back('x');
  write_file(lpath, lb);
  CHECK_THROWS_WITH_AS(load_sample(m, 0), doctest::Contains("checksum mismatch"),
                       std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("foreign files are not corpus manifests") {
  const fs::path dir = fresh_dir("picd_corpus_bogus");
  fs::create_directories(dir);
  const std::string junk = "hello\n";
  write_file((dir / "manifest.txt").string(),
             std::vector<uint8_t>(junk.begin(), junk.end()));
  CHECK_THROWS_WITH_AS(load_manifest(dir.string()),
                       doctest::Contains("not a corpus manifest"),
                       std::runtime_error);
  CHECK_THROWS_AS(load_manifest((dir / "missing").string()), std::runtime_error);
  fs::remove_all(dir);
}
