#pragma once

// Differentiable OCR surrogate.
//
// Guidance needs d(ocr_loss)/d(image), which the oracle extractor cannot
// provide. The surrogate is a small per-character CNN: word cells are cut
// from the image with a differentiable bilinear resampler, classified into
// the alphabet plus a blank class, and scored by MSE against one-hot
// targets. For a fixed layout the crop operation is linear in the image,
// so its gradient is exact.
//
// The oracle (ocr.hpp) remains the ground truth for evaluation; this model
// only shapes gradients and is trained from corpus ground-truth layouts.

#include <string>
#include <vector>

#include "picd/checkpoint.hpp"
#include "picd/font.hpp"
#include "picd/nn.hpp"
#include "picd/text.hpp"

namespace picd {

using nn::Cache;

constexpr int kOcrCrop = 16;                    // resampled cell size
constexpr int kOcrClasses = kAlphabetSize + 1;  // alphabet + blank
constexpr int kOcrBlank = kAlphabetSize;        // class index of "no glyph"

// Per-sample zero-mean shift, removing overall brightness before the
// classifier; polarity variation is left to the training data.
template <typename T>
struct ZeroMean {
  Tensor<T> forward(const Tensor<T>& x, Cache mode) {
    (void)mode;
    const int N = x.dim(0);
    const Eigen::Index per = x.size() / N;
    Tensor<T> y = x;
    for (int n = 0; n < N; ++n) {
      auto seg = y.flat().segment(Eigen::Index(n) * per, per);
      seg -= seg.mean();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int N = gy.dim(0);
    const Eigen::Index per = gy.size() / N;
    Tensor<T> gx = gy;
    for (int n = 0; n < N; ++n) {
      auto seg = gx.flat().segment(Eigen::Index(n) * per, per);
      seg -= seg.mean();
    }
    return gx;
  }
};

template <typename T>
struct CharCnn {
  nn::Conv2d<T> conv1, conv2;
  nn::SiLU<T> a1, a2, a3;
  nn::AvgPool2<T> p1, p2;
  nn::Linear<T> fc1, fc2;
  ZeroMean<T> norm;

  CharCnn() = default;

  explicit CharCnn(Rng& rng) {
    conv1 = nn::Conv2d<T>(1, 8, 3, 1, 1, rng);
    conv2 = nn::Conv2d<T>(8, 16, 3, 1, 1, rng);
    fc1 = nn::Linear<T>(16 * 4 * 4, 64, rng);
    fc2 = nn::Linear<T>(64, kOcrClasses, rng);
  }

  // x is {N, 1, 16, 16}; returns logits {N, kOcrClasses}.
  Tensor<T> forward(const Tensor<T>& x, Cache mode) {
    Tensor<T> h = norm.forward(x, mode);
    h = p1.forward(a1.forward(conv1.forward(h, mode), mode));
    h = p2.forward(a2.forward(conv2.forward(h, mode), mode));
    h = h.reshaped({h.dim(0), 16 * 4 * 4});
    h = a3.forward(fc1.forward(h, mode), mode);
    return fc2.forward(h, mode);
  }

  Tensor<T> backward(const Tensor<T>& glogits) {
    Tensor<T> g = a3.backward(fc2.backward(glogits));
    g = fc1.backward(g);
    g = g.reshaped({g.dim(0), 16, 4, 4});
    g = conv2.backward(a2.backward(p2.backward(g)));
    g = conv1.backward(a1.backward(p1.backward(g)));
    return norm.backward(g);
  }

  void collect(const std::string& p, nn::ParamRefs<T>& out) {
    conv1.collect(p + ".conv1", out);
    conv2.collect(p + ".conv2", out);
    fc1.collect(p + ".fc1", out);
    fc2.collect(p + ".fc2", out);
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> refs;
    collect("ocr", refs);
    return refs;
  }

  void save(const std::string& path) {
    Checkpoint c;
    c.strings["model"] = "ocr";
    c.scalars["crop"] = kOcrCrop;
    c.scalars["classes"] = kOcrClasses;
    auto refs = params();
    c.put_params(refs);
    c.save(path);
  }

  void load(const std::string& path) {
    Checkpoint c = Checkpoint::load(path);
    if (c.str("model") != "ocr")
      throw std::runtime_error("ocr: " + path + " holds a different model");
    c.expect("crop", kOcrCrop);
    c.expect("classes", kOcrClasses);
    auto refs = params();
    c.get_params(refs);
  }
};

// Differentiable extraction of per-character crops. Cell boxes come from
// the layout (content length, x, y, h and the font cell geometry), the
// image is reduced to luminance, and each cell is bilinearly resampled to
// kOcrCrop square. Cells fully outside the canvas are skipped and counted.
template <typename T>
struct CropLayer {
  // image is {3, H, W} or {1, H, W}. Returns {K, 1, S, S}.
  Tensor<T> forward(const Tensor<T>& image, const TextLayout& z) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
      throw std::runtime_error("crop_boxes: image must be {1|3, H, W}");
    channels_ = image.dim(0);
    H_ = image.dim(1);
    W_ = image.dim(2);
    const int S = kOcrCrop;

    std::vector<T> lum(size_t(H_) * size_t(W_));
    for (int r = 0; r < H_; ++r)
      for (int c = 0; c < W_; ++c)
        lum[size_t(r) * size_t(W_) + size_t(c)] =
            channels_ == 1 ? image(0, r, c)
                           : T(0.299) * image(0, r, c) + T(0.587) * image(1, r, c) +
                                 T(0.114) * image(2, r, c);

    labels_.clear();
    skipped_ = 0;
    struct Cell {
      int x, y, h, gw;
      int label;
    };
    std::vector<Cell> cells;
    for (const WordRecord& w : z.words) {
      if (w.h <= 0) {
        skipped_ += int(w.content.size());
        continue;
      }
      const int gw = glyph_width(w.h), adv = glyph_advance(w.h);
      for (size_t i = 0; i < w.content.size(); ++i) {
        const int cx = w.x + int(i) * adv;
        if (cx >= W_ || cx + gw <= 0 || w.y >= H_ || w.y + w.h <= 0) {
          ++skipped_;
          continue;
        }
        cells.push_back({cx, w.y, w.h, gw, int(w.content[i]) - kAlphabetFirst});
      }
    }

    const int K = int(cells.size());
    Tensor<T> crops({K, 1, S, S});
    idx_.assign(size_t(K) * size_t(S) * size_t(S) * 4, 0);
    wgt_.assign(size_t(K) * size_t(S) * size_t(S) * 4, T(0));
    for (int k = 0; k < K; ++k) {
      const Cell& cl = cells[size_t(k)];
      labels_.push_back(cl.label);
      for (int oy = 0; oy < S; ++oy)
        for (int ox = 0; ox < S; ++ox) {
          const double sy = cl.y + (oy + 0.5) * double(cl.h) / S - 0.5;
          const double sx = cl.x + (ox + 0.5) * double(cl.gw) / S - 0.5;
          const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
          const T fy = T(sy - y0), fx = T(sx - x0);
          const int ys[2] = {std::clamp(y0, 0, H_ - 1), std::clamp(y0 + 1, 0, H_ - 1)};
          const int xs[2] = {std::clamp(x0, 0, W_ - 1), std::clamp(x0 + 1, 0, W_ - 1)};
          const T ws[4] = {(T(1) - fy) * (T(1) - fx), (T(1) - fy) * fx,
                           fy * (T(1) - fx), fy * fx};
          const size_t base = ((size_t(k) * S + size_t(oy)) * S + size_t(ox)) * 4;
          T v = T(0);
          for (int q = 0; q < 4; ++q) {
            const size_t src = size_t(ys[q / 2]) * size_t(W_) + size_t(xs[q % 2]);
            idx_[base + size_t(q)] = src;
            wgt_[base + size_t(q)] = ws[q];
            v += ws[q] * lum[src];
          }
          crops(k, 0, oy, ox) = v;
        }
    }
    return crops;
  }

  // Scatter the crop gradient back to the image through the cached
  // sampling weights and the luminance mix.
  Tensor<T> backward(const Tensor<T>& gcrops) {
    Tensor<T> gimg({channels_, H_, W_});
    std::vector<T> glum(size_t(H_) * size_t(W_), T(0));
    const int K = gcrops.dim(0), S = kOcrCrop;
    for (int k = 0; k < K; ++k)
      for (int oy = 0; oy < S; ++oy)
        for (int ox = 0; ox < S; ++ox) {
          const T g = gcrops(k, 0, oy, ox);
          const size_t base = ((size_t(k) * S + size_t(oy)) * S + size_t(ox)) * 4;
          for (int q = 0; q < 4; ++q) glum[idx_[base + size_t(q)]] += g * wgt_[base + size_t(q)];
        }
    const T coef[3] = {channels_ == 1 ? T(1) : T(0.299), T(0.587), T(0.114)};
    for (int ch = 0; ch < channels_; ++ch)
      for (int r = 0; r < H_; ++r)
        for (int c = 0; c < W_; ++c)
          gimg(ch, r, c) = coef[ch] * glum[size_t(r) * size_t(W_) + size_t(c)];
    return gimg;
  }

  const std::vector<int>& labels() const { return labels_; }
  int skipped() const { return skipped_; }

 private:
  int channels_ = 0, H_ = 0, W_ = 0;
  std::vector<int> labels_;
  int skipped_ = 0;
  std::vector<size_t> idx_;
  std::vector<T> wgt_;
};

// MSE between logits and one-hot targets, averaged over all entries.
template <typename T>
Tensor<T> one_hot_targets(const std::vector<int>& labels) {
  Tensor<T> t({int(labels.size()), kOcrClasses});
  for (size_t i = 0; i < labels.size(); ++i) t(int(i), labels[i]) = T(1);
  return t;
}

// OCR guidance loss: surrogate logits on the layout's cells vs one-hot
// targets. Empty layouts (or layouts whose cells all fall off the canvas)
// contribute nothing. When gimage is non-null it receives d(loss)/d(image).
template <typename T>
T ocr_loss(CharCnn<T>& model, const Tensor<T>& image, const TextLayout& z,
           Tensor<T>* gimage = nullptr) {
  CropLayer<T> crop;
  Tensor<T> crops = crop.forward(image, z);
  if (crops.dim(0) == 0) {
    if (gimage) *gimage = Tensor<T>({image.dim(0), image.dim(1), image.dim(2)});
    return T(0);
  }
  Tensor<T> logits = model.forward(crops, gimage ? Cache::kData : Cache::kNone);
  const Tensor<T> targets = one_hot_targets<T>(crop.labels());
  const T loss = nn::mse(logits, targets);
  if (gimage) *gimage = crop.backward(model.backward(nn::mse_grad(logits, targets)));
  return loss;
}

}  // namespace picd
