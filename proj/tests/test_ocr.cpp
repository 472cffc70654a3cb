#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "picd/corpus.hpp"
#include "picd/glyph.hpp"
#include "picd/metrics.hpp"
#include "picd/ocr.hpp"
#include "picd/ocr_net.hpp"
#include "picd/rng.hpp"
#include "picd/tensor.hpp"

using namespace picd;

namespace {

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

template <typename F>
double central_fd(Tensor<double>& x, Eigen::Index i, double eps, F&& f) {
  const double keep = x[i];
  x[i] = keep + eps;
  const double hi = f();
  x[i] = keep - eps;
  const double lo = f();
  x[i] = keep;
  return (hi - lo) / (2.0 * eps);
}

}  // namespace

TEST_CASE("the oracle inverts the glyph renderer on a thousand layouts") {
  int done = 0;
  for (int i = 0; done < 1000; ++i) {
    GeneratorOptions opt;
    if (i % 3 == 1) opt.invert_theme = true;
    if (i % 3 == 2) opt.canvas = 96;
    const ScreenSample s = make_sample(33, i, opt);
    const ExtractResult r = extract(render_glyph(s.layout));
    CHECK(layouts_equal(r.layout, s.layout));
    CHECK(r.dropped == 0);
    CHECK(r.inexact == 0);
    ++done;
  }
}

TEST_CASE("blank images yield an empty layout, not an error") {
  for (int ch : {1, 3}) {
    const Tensorf img({ch, 40, 56});
    const ExtractResult r = extract(img);
    CHECK(r.layout.words.empty());
    CHECK(r.layout.canvas_w == 56);
    CHECK(r.layout.canvas_h == 40);
    CHECK(r.dropped == 0);
  }
  Tensorf flat({3, 24, 24});
  flat.flat().setConstant(0.7f);
  CHECK(extract(flat).layout.words.empty());
}

TEST_CASE("extraction shrugs off mild gaussian noise") {
  Rng rng(515);
  double jacc_sum = 0.0;
  const int n = 30;
  for (int i = 0; i < n; ++i) {
    const ScreenSample s = make_sample(90, i);
    Tensorf noisy = s.image;
    for (Eigen::Index k = 0; k < noisy.size(); ++k)
      noisy[k] += 0.02f * float(rng.normal());
    const ExtractResult r = extract(clamp01(noisy));
    jacc_sum += jaccard_text(r.layout, s.layout);
  }
  CHECK(jacc_sum / n >= 0.95);
}

TEST_CASE("unreadable ink is dropped and counted") {
  Rng rng(77);
  Tensorf img({1, 48, 48});
  for (int r = 14; r < 34; ++r)
    for (int c = 14; c < 34; ++c)
      img(0, r, c) = (rng.uniform() < 0.5) ? 1.0f : 0.0f;
  const ExtractResult r = extract(img);
  CHECK(r.layout.words.empty());
  CHECK(r.dropped >= 1);
}

TEST_CASE("extraction is deterministic") {
  const ScreenSample s = make_sample(4, 0);
  const ExtractResult a = extract(s.image);
  const ExtractResult b = extract(s.image);
  CHECK(layouts_equal(a.layout, b.layout));
  CHECK(a.dropped == b.dropped);
  CHECK(a.inexact == b.inexact);
}

TEST_CASE("crops cover one cell per character, left to right") {
  // Horizontal ramp: a crop's mean brightness grows with its cell column.
  Tensorf img({1, 32, 96});
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 96; ++c) img(0, r, c) = float(c) / 96.0f;

  const TextLayout z{96, 32, {{"abcd", 4, 8, 12}}};
  CropLayer<float> crop;
  const Tensorf crops = crop.forward(img, z);
  REQUIRE(crops.dim(0) == 4);
  CHECK(crops.dim(1) == 1);
  CHECK(crops.dim(2) == kOcrCrop);
  CHECK(crops.dim(3) == kOcrCrop);
  CHECK(crop.skipped() == 0);

  float prev = -1.0f;
  for (int k = 0; k < 4; ++k) {
    const float mean =
        crops.flat().segment(k * kOcrCrop * kOcrCrop, kOcrCrop * kOcrCrop).mean();
    CHECK(mean > prev);
    prev = mean;
  }

  // A constant image crops to exactly that constant everywhere.
  Tensorf flat({3, 32, 96});
  flat.flat().setConstant(0.42f);
  const Tensorf fc = crop.forward(flat, z);
  for (Eigen::Index i = 0; i < fc.size(); ++i)
    CHECK(fc[i] == doctest::Approx(0.42f).epsilon(1e-6));
}

TEST_CASE("crop labels index the alphabet and blank stays unused") {
  const TextLayout z{128, 32, {{"!A~", 2, 2, 10}, {"z", 64, 18, 8}}};
  CropLayer<float> crop;
  Tensorf img({1, 32, 128});
  crop.forward(img, z);
  const std::vector<int> want = {0, 'A' - kAlphabetFirst, '~' - kAlphabetFirst,
                                 'z' - kAlphabetFirst};
  CHECK(crop.labels() == want);

  const Tensorf t = one_hot_targets<float>(crop.labels());
  REQUIRE(t.dim(0) == 4);
  REQUIRE(t.dim(1) == kOcrClasses);
  for (int i = 0; i < 4; ++i) {
    CHECK(t.flat().segment(i * kOcrClasses, kOcrClasses).sum() == 1.0f);
    CHECK(t(i, want[size_t(i)]) == 1.0f);
    CHECK(t(i, kOcrBlank) == 0.0f);
  }
}

TEST_CASE("degenerate cells are skipped and reported") {
  Tensorf img({1, 24, 24});
  CropLayer<float> crop;

  // Zero height drops the whole word.
  TextLayout flat_word{24, 24, {{"abc", 2, 2, 0}}};
  CHECK(crop.forward(img, flat_word).dim(0) == 0);
  CHECK(crop.skipped() == 3);

  // Cells that start past the right edge are dropped one by one.
  TextLayout edge{24, 24, {{"ab", 23, 2, 8}}};
  CHECK(crop.forward(img, edge).dim(0) == 1);
  CHECK(crop.skipped() == 1);

  // A word above the canvas contributes nothing.
  TextLayout above{24, 24, {{"hi", 2, -30, 8}}};
  CHECK(crop.forward(img, above).dim(0) == 0);
  CHECK(crop.skipped() == 2);
}

TEST_CASE("crop resampling gradient matches finite differences") {
  Rng rng(606);
  Tensor<double> img({1, 20, 24});
  for (Eigen::Index i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  const TextLayout z{24, 20, {{"ab", 2, 3, 7}}};

  CropLayer<double> crop;
  Tensor<double> crops = crop.forward(img, z);
  Tensor<double> w({crops.dim(0), 1, kOcrCrop, kOcrCrop});
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();

  crop.forward(img, z);
  Tensor<double> grad = crop.backward(w);

  auto objective = [&]() {
    CropLayer<double> c2;
    const Tensor<double> cr = c2.forward(img, z);
    return double((cr.flat() * w.flat()).sum());
  };
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double fd = central_fd(img, i, 1e-5, objective);
    CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }

  // RGB gradients carry the luminance mix per channel.
  Tensor<double> rgb({3, 20, 24});
  for (Eigen::Index i = 0; i < rgb.size(); ++i) rgb[i] = rng.uniform();
  CropLayer<double> crgb;
  crgb.forward(rgb, z);
  Tensor<double> grgb = crgb.backward(w);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 24; ++c) {
      CHECK(grgb(0, r, c) == doctest::Approx(0.299 / 0.587 * grgb(1, r, c)).epsilon(1e-9));
      CHECK(grgb(2, r, c) == doctest::Approx(0.114 / 0.587 * grgb(1, r, c)).epsilon(1e-9));
    }
}

TEST_CASE("ocr loss is zero on empty or off-canvas layouts") {
  Rng rng(11);
  CharCnn<float> model(rng);
  Tensorf img({3, 16, 16});
  img.flat().setConstant(0.5f);

  TextLayout empty{16, 16, {}};
  Tensorf gimg;
  CHECK(ocr_loss(model, img, empty, &gimg) == 0.0f);
  REQUIRE(gimg.shape() == img.shape());
  CHECK(gimg.flat().cwiseAbs().maxCoeff() == 0.0f);

  TextLayout off{16, 16, {{"xy", 2, -40, 8}}};
  CHECK(ocr_loss(model, img, off) == 0.0f);
}

TEST_CASE("ocr loss is non-negative and finite") {
  Rng rng(12);
  CharCnn<float> model(rng);
  for (int trial = 0; trial < 10; ++trial) {
    Tensorf img({1, 24, 40});
    for (Eigen::Index i = 0; i < img.size(); ++i) img[i] = float(rng.uniform());
    const TextLayout z{40, 24, {{"Ab1", 2, 4, 9}}};
    const float loss = ocr_loss(model, img, z);
    CHECK(loss >= 0.0f);
    CHECK(std::isfinite(loss));
  }
}

TEST_CASE("ocr loss gradient matches finite differences on a 16x16 probe") {
  Rng rng(3);
  CharCnn<double> model(rng);
  Tensor<double> img({1, 16, 16});
  for (Eigen::Index i = 0; i < img.size(); ++i) img[i] = 0.5 + 0.3 * rng.normal();
  const TextLayout z{16, 16, {{"Hi", 1, 2, 9}}};

  Tensor<double> grad;
  const double loss = ocr_loss(model, img, z, &grad);
  CHECK(loss > 0.0);
  REQUIRE(grad.shape() == img.shape());

  auto objective = [&]() { return double(ocr_loss(model, img, z)); };
  double max_rel = 0.0;
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double fd = central_fd(img, i, 1e-6, objective);
    const double rel =
        std::abs(grad[i] - fd) / std::max(1e-8, std::max(std::abs(grad[i]), std::abs(fd)));
    max_rel = std::max(max_rel, rel);
  }
  CHECK(max_rel <= 1e-3);
}

TEST_CASE("zero-mean layer removes per-sample brightness") {
  Rng rng(21);
  Tensor<double> x({3, 1, 4, 4});
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal() + 2.0;
  ZeroMean<double> zm;
  const Tensor<double> y = zm.forward(x, Cache::kNone);
  for (int n = 0; n < 3; ++n)
    CHECK(std::abs(y.flat().segment(n * 16, 16).mean()) <= 1e-12);

  // Adding a constant per sample changes nothing downstream.
  Tensor<double> shifted = x;
  shifted.flat().segment(0, 16).array() += 5.0;
  CHECK(max_abs_diff(zm.forward(shifted, Cache::kNone), y) <= 1e-12);
}

TEST_CASE("surrogate checkpoints restore identical logits") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "picd_ocr_test.ckpt").string();

  Rng rng(31);
  CharCnn<float> model(rng);
  Tensorf x({2, 1, kOcrCrop, kOcrCrop});
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = float(rng.uniform());
  const Tensorf before = model.forward(x, Cache::kNone);

  model.save(path);
  Rng rng2(99);
  CharCnn<float> other(rng2);
  CHECK_FALSE(all_equal(other.forward(x, Cache::kNone), before));
  other.load(path);
  CHECK(all_equal(other.forward(x, Cache::kNone), before));

  Checkpoint foreign;
  foreign.strings["model"] = "codec";
  foreign.save(path);
  CHECK_THROWS_WITH_AS(other.load(path), doctest::Contains("holds a different model"),
                       std::runtime_error);
  fs::remove(path);
}
