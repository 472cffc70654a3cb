#pragma once

// Learned conditional image codec.
//
// A small analysis/synthesis transform pair maps 64x64 RGB (any size
// divisible by 8) to an 8x-downsampled latent and back. A glyph branch
// encodes the rendered-text map at matching resolutions and is fused into
// both transforms through zero-initialized 1x1 convolutions, so right
// after the unconditional pretrain the conditional model reproduces the
// unconditional one exactly, and the conditioning influence grows only as
// the fusion weights train.
//
// The latent is coded with a factorized per-channel logistic model:
// additive-uniform-noise relaxation during training, round + clamp to the
// model's support at coding time, and a static-table range coder derived
// from the same distribution, so the estimated and the spent bits agree
// to quantization of the tables.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "picd/arith.hpp"
#include "picd/checkpoint.hpp"
#include "picd/nn.hpp"

namespace picd {

using nn::Cache;

struct CodecConfig {
  int ch = 16;
  int z_ch = 24;

  bool operator==(const CodecConfig&) const = default;
};

// Per-channel logistic distribution over quantized latent values.
template <typename T>
struct FactorizedEntropy {
  EVector<T> mu, log_s, g_mu, g_log_s;
  bool trainable = true;

  FactorizedEntropy() = default;

  explicit FactorizedEntropy(int channels) {
    mu = EVector<T>::Zero(channels);
    log_s = EVector<T>::Zero(channels);
    g_mu = EVector<T>::Zero(channels);
    g_log_s = EVector<T>::Zero(channels);
  }

  static T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }

  // Probability mass of the unit bin centered at y for channel c.
  T bin_prob(int c, T y) const {
    const T s = std::exp(log_s[c]);
    return sigmoid((y + T(0.5) - mu[c]) / s) - sigmoid((y - T(0.5) - mu[c]) / s);
  }

  // Total bits to code y (noisy or quantized) under the model, plus
  // gradients into y, mu and log_s. Gradients accumulate into the model's
  // g_ fields and into gy when it is non-null.
  T bits_and_grads(const Tensor<T>& y, Tensor<T>* gy, T gscale) {
    const int N = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    T bits = T(0);
    const T inv_ln2 = T(1.4426950408889634);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T s = std::exp(log_s[c]);
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const T v = y(n, c, h, w);
            const T ahi = (v + T(0.5) - mu[c]) / s;
            const T alo = (v - T(0.5) - mu[c]) / s;
            const T shi = sigmoid(ahi), slo = sigmoid(alo);
            T p = shi - slo;
            if (p < T(1e-9)) p = T(1e-9);
            bits -= std::log(p) * inv_ln2;
            // d p / d v and the chain into -log2(p).
            const T dhi = shi * (T(1) - shi) / s;
            const T dlo = slo * (T(1) - slo) / s;
            const T dbits_dp = -inv_ln2 / p;
            const T gp = gscale * dbits_dp;
            if (gy) (*gy)(n, c, h, w) += gp * (dhi - dlo);
            g_mu[c] += gp * (dlo - dhi);
            g_log_s[c] += gp * s * (alo * dlo - ahi * dhi);
          }
      }
    return bits;
  }

  // Estimated bits with no gradient bookkeeping.
  T bits(const Tensor<T>& y) const {
    const int N = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    T total = T(0);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            T p = bin_prob(c, y(n, c, h, w));
            if (p < T(1e-9)) p = T(1e-9);
            total -= T(std::log(double(p)) * 1.4426950408889634);
          }
    return total;
  }

  // Integer support covering all but ~2^-17 of the channel's mass.
  void support(int c, int& lo, int& hi) const {
    const double m = double(mu[c]), s = std::exp(double(log_s[c]));
    lo = int(std::floor(m - 14.0 * s - 2.0));
    hi = int(std::ceil(m + 14.0 * s + 2.0));
    if (lo < -2047) lo = -2047;
    if (hi > 2047) hi = 2047;
  }

  // Cumulative frequency table for the range coder, min frequency 1.
  void freq_table(int c, int lo, int hi, std::vector<uint32_t>& cum) const {
    const int n = hi - lo + 1;
    cum.assign(size_t(n) + 1, 0);
    for (int k = 0; k < n; ++k) {
      T p = bin_prob(c, T(lo + k));
      uint32_t f = uint32_t(std::lround(double(p) * 8192.0));
      if (f == 0) f = 1;
      cum[size_t(k) + 1] = cum[size_t(k)] + f;
    }
  }

  void collect(const std::string& p, nn::ParamRefs<T>& out) {
    nn::add_param(out, p + ".mu", mu, g_mu, trainable);
    nn::add_param(out, p + ".log_s", log_s, g_log_s, trainable);
  }
};

template <typename T>
struct CodecModel {
  CodecConfig cfg;
  int version = 1;

  // Analysis stack (image -> latent).
  nn::Conv2d<T> a1, a2, a3, a4, a5;
  nn::SiLU<T> aa1, aa2, aa3, aa4;
  // Synthesis stack (latent -> image).
  nn::Conv2d<T> s1, s2, s3, s4, s5, s_out;
  nn::SiLU<T> sa1, sa2, sa3, sa4, sa5;
  nn::UpsampleNearest2<T> up1, up2, up3;
  // Glyph branch and its fusion taps.
  nn::Conv2d<T> du1, du2, du3;
  nn::SiLU<T> dua1, dua2, dua3;
  nn::Conv2d<T> zc_e32, zc_e16, zc_d8, zc_d16, zc_d32;
  FactorizedEntropy<T> em;

  CodecModel() = default;

  CodecModel(const CodecConfig& c, Rng& rng) : cfg(c) {
    const int ch = c.ch, zc = c.z_ch;
    a1 = nn::Conv2d<T>(3, ch, 3, 2, 1, rng);
    a2 = nn::Conv2d<T>(ch, ch, 3, 1, 1, rng);
    a3 = nn::Conv2d<T>(ch, 2 * ch, 3, 2, 1, rng);
    a4 = nn::Conv2d<T>(2 * ch, 2 * ch, 3, 1, 1, rng);
    a5 = nn::Conv2d<T>(2 * ch, zc, 3, 2, 1, rng, T(0.5));
    s1 = nn::Conv2d<T>(zc, 2 * ch, 3, 1, 1, rng);
    s2 = nn::Conv2d<T>(2 * ch, 2 * ch, 3, 1, 1, rng);
    s3 = nn::Conv2d<T>(2 * ch, 2 * ch, 3, 1, 1, rng);
    s4 = nn::Conv2d<T>(2 * ch, ch, 3, 1, 1, rng);
    s5 = nn::Conv2d<T>(ch, ch, 3, 1, 1, rng);
    s_out = nn::Conv2d<T>(ch, 3, 3, 1, 1, rng, T(0.5));
    du1 = nn::Conv2d<T>(1, ch, 3, 2, 1, rng);
    du2 = nn::Conv2d<T>(ch, 2 * ch, 3, 2, 1, rng);
    du3 = nn::Conv2d<T>(2 * ch, 2 * ch, 3, 2, 1, rng);
    zc_e32 = nn::Conv2d<T>::zero_init(ch, ch, 1, 1, 0);
    zc_e16 = nn::Conv2d<T>::zero_init(2 * ch, 2 * ch, 1, 1, 0);
    zc_d8 = nn::Conv2d<T>::zero_init(2 * ch, 2 * ch, 1, 1, 0);
    zc_d16 = nn::Conv2d<T>::zero_init(2 * ch, 2 * ch, 1, 1, 0);
    zc_d32 = nn::Conv2d<T>::zero_init(2 * ch, ch, 1, 1, 0);
    em = FactorizedEntropy<T>(zc);
  }

  // Shared glyph feature pyramid. The forward is a pure function of the
  // glyph map, so when analysis and synthesis both run in one pass the
  // second call recomputes identical activations and the caches stay
  // valid for a single combined backward.
  void dup_forward(const Tensor<T>& glyph, Cache mode) {
    u1_ = dua1.forward(du1.forward(glyph, mode), mode);
    u2_ = dua2.forward(du2.forward(u1_, mode), mode);
    u3_ = dua3.forward(du3.forward(u2_, mode), mode);
    gu1_ = Tensor<T>(u1_.shape());
    gu2_ = Tensor<T>(u2_.shape());
    gu3_ = Tensor<T>(u3_.shape());
  }

  // Applies the accumulated fusion gradients through the glyph branch;
  // call once per training step, after both transform backwards.
  void dup_backward() {
    Tensor<T> g = du3.backward(dua3.backward(gu3_));
    g.flat() += gu2_.flat();
    g = du2.backward(dua2.backward(g));
    g.flat() += gu1_.flat();
    du1.backward(dua1.backward(g));
  }

  Tensor<T> analysis(const Tensor<T>& x, const Tensor<T>& glyph, Cache mode) {
    const bool cond = !glyph.empty();
    has_glyph_ = cond;
    if (cond) dup_forward(glyph, mode);
    Tensor<T> h = aa1.forward(a1.forward(x, mode), mode);
    if (cond) h.flat() += zc_e32.forward(u1_, mode).flat();
    h = aa2.forward(a2.forward(h, mode), mode);
    h = aa3.forward(a3.forward(h, mode), mode);
    if (cond) h.flat() += zc_e16.forward(u2_, mode).flat();
    h = aa4.forward(a4.forward(h, mode), mode);
    return a5.forward(h, mode);
  }

  // Gradient to the input image; fusion gradients accumulate for
  // dup_backward, parameter gradients follow the cache mode.
  Tensor<T> analysis_backward(const Tensor<T>& gy, bool fuse_grads) {
    Tensor<T> g = a5.backward(gy);
    g = a4.backward(aa4.backward(g));
    if (has_glyph_ && fuse_grads) gu2_.flat() += zc_e16.backward(g).flat();
    g = a3.backward(aa3.backward(g));
    g = a2.backward(aa2.backward(g));
    if (has_glyph_ && fuse_grads) gu1_.flat() += zc_e32.backward(g).flat();
    return a1.backward(aa1.backward(g));
  }

  Tensor<T> synthesis(const Tensor<T>& y, const Tensor<T>& glyph, Cache mode) {
    const bool cond = !glyph.empty();
    // When analysis already ran this recomputes identical activations (the
    // branch is a pure function of the glyph); the gradient accumulators
    // are preserved so one combined backward covers both transforms.
    if (cond) {
      Tensor<T> keep1 = std::move(gu1_), keep2 = std::move(gu2_), keep3 = std::move(gu3_);
      dup_forward(glyph, mode);
      if (has_glyph_) {
        gu1_ = std::move(keep1);
        gu2_ = std::move(keep2);
        gu3_ = std::move(keep3);
      }
      has_glyph_ = true;
    }
    Tensor<T> h = sa1.forward(s1.forward(y, mode), mode);
    if (cond) h.flat() += zc_d8.forward(u3_, mode).flat();
    h = sa2.forward(s2.forward(h, mode), mode);
    h = sa3.forward(s3.forward(up1.forward(h), mode), mode);
    if (cond) h.flat() += zc_d16.forward(u2_, mode).flat();
    h = sa4.forward(s4.forward(up2.forward(h), mode), mode);
    if (cond) h.flat() += zc_d32.forward(u1_, mode).flat();
    h = sa5.forward(s5.forward(up3.forward(h), mode), mode);
    return s_out.forward(h, mode);
  }

  Tensor<T> synthesis_backward(const Tensor<T>& gx, bool fuse_grads) {
    Tensor<T> g = s_out.backward(gx);
    g = up3.backward(s5.backward(sa5.backward(g)));
    if (has_glyph_ && fuse_grads) gu1_.flat() += zc_d32.backward(g).flat();
    g = up2.backward(s4.backward(sa4.backward(g)));
    if (has_glyph_ && fuse_grads) gu2_.flat() += zc_d16.backward(g).flat();
    g = up1.backward(s3.backward(sa3.backward(g)));
    g = s2.backward(sa2.backward(g));
    if (has_glyph_ && fuse_grads) gu3_.flat() += zc_d8.backward(g).flat();
    return s1.backward(sa1.backward(g));
  }

  // Round with straight-through gradient, clamped to the entropy model's
  // coded support so training-time and coding-time values agree.
  Tensor<T> quantize(const Tensor<T>& y) const {
    Tensor<T> q = y;
    const int N = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    for (int c = 0; c < C; ++c) {
      int lo, hi;
      em.support(c, lo, hi);
      for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            T v = std::nearbyint(y(n, c, h, w));
            if (v < T(lo)) v = T(lo);
            if (v > T(hi)) v = T(hi);
            q(n, c, h, w) = v;
          }
    }
    return q;
  }

  // --- Wire format -------------------------------------------------------
  // [version u16be][z_ch u8][lh u8][lw u8][range-coded payload]

  std::vector<uint8_t> encode_latent(const Tensor<T>& yq) const {
    const int C = yq.dim(1), H = yq.dim(2), W = yq.dim(3);
    if (yq.dim(0) != 1) throw std::runtime_error("codec: encode expects one image");
    if (H > 255 || W > 255) throw std::runtime_error("codec: latent too large");
    BitWriter bw;
    bw.put_bits(uint64_t(version), 16);
    bw.put_bits(uint64_t(C), 8);
    bw.put_bits(uint64_t(H), 8);
    bw.put_bits(uint64_t(W), 8);
    ArithEncoder enc(bw);
    std::vector<uint32_t> cum;
    for (int c = 0; c < C; ++c) {
      int lo, hi;
      em.support(c, lo, hi);
      em.freq_table(c, lo, hi, cum);
      const uint32_t total = cum.back();
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const int k = int(yq(0, c, h, w)) - lo;
          enc.encode(cum[size_t(k)], cum[size_t(k) + 1], total);
        }
    }
    enc.finish();
    return bw.bytes();
  }

  Tensor<T> decode_latent(const uint8_t* data, size_t size) const {
    BitReader br(data, size);
    const int ver = int(br.get_bits(16));
    if (ver != version)
      throw std::runtime_error("codec: stream version " + std::to_string(ver) +
                               " does not match model version " + std::to_string(version));
    const int C = int(br.get_bits(8));
    const int H = int(br.get_bits(8));
    const int W = int(br.get_bits(8));
    if (C != cfg.z_ch) throw std::runtime_error("codec: latent channel mismatch");
    if (H == 0 || W == 0) throw std::runtime_error("codec: empty latent");
    ArithDecoder dec(br);
    Tensor<T> yq({1, C, H, W});
    std::vector<uint32_t> cum;
    for (int c = 0; c < C; ++c) {
      int lo, hi;
      em.support(c, lo, hi);
      em.freq_table(c, lo, hi, cum);
      const uint32_t total = cum.back();
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const uint32_t target = dec.decode_target(total);
          // Binary search the cumulative table.
          const auto it = std::upper_bound(cum.begin(), cum.end(), target);
          const int k = int(it - cum.begin()) - 1;
          if (k < 0 || k > hi - lo) throw std::runtime_error("codec: corrupt latent stream");
          dec.consume(cum[size_t(k)], cum[size_t(k) + 1], total);
          yq(0, c, h, w) = T(lo + k);
        }
    }
    return yq;
  }

  std::vector<uint8_t> encode_image(const Tensor<T>& img, const Tensor<T>& glyph) {
    check_size(img);
    Tensor<T> x = batch_of(img);
    Tensor<T> g = glyph.empty() ? Tensor<T>() : batch_of(glyph);
    const Tensor<T> y = analysis(x, g, Cache::kNone);
    return encode_latent(quantize(y));
  }

  Tensor<T> decode_image(const std::vector<uint8_t>& bytes, const Tensor<T>& glyph) {
    const Tensor<T> yq = decode_latent(bytes.data(), bytes.size());
    Tensor<T> g = glyph.empty() ? Tensor<T>() : batch_of(glyph);
    has_glyph_ = false;
    Tensor<T> x = synthesis(yq, g, Cache::kNone);
    return x.slice(0);
  }

  // Model-estimated bits per pixel for coding img (header excluded).
  double bpp_estimate(const Tensor<T>& img, const Tensor<T>& glyph) {
    check_size(img);
    Tensor<T> x = batch_of(img);
    Tensor<T> g = glyph.empty() ? Tensor<T>() : batch_of(glyph);
    const Tensor<T> yq = quantize(analysis(x, g, Cache::kNone));
    const double bits = double(em.bits(yq));
    return bits / (double(img.dim(1)) * double(img.dim(2)));
  }

  void collect(const std::string& p, nn::ParamRefs<T>& out) {
    a1.collect(p + ".a1", out);
    a2.collect(p + ".a2", out);
    a3.collect(p + ".a3", out);
    a4.collect(p + ".a4", out);
    a5.collect(p + ".a5", out);
    s1.collect(p + ".s1", out);
    s2.collect(p + ".s2", out);
    s3.collect(p + ".s3", out);
    s4.collect(p + ".s4", out);
    s5.collect(p + ".s5", out);
    s_out.collect(p + ".s_out", out);
    du1.collect(p + ".du1", out);
    du2.collect(p + ".du2", out);
    du3.collect(p + ".du3", out);
    zc_e32.collect(p + ".zc_e32", out);
    zc_e16.collect(p + ".zc_e16", out);
    zc_d8.collect(p + ".zc_d8", out);
    zc_d16.collect(p + ".zc_d16", out);
    zc_d32.collect(p + ".zc_d32", out);
    em.collect(p + ".em", out);
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> refs;
    collect("codec", refs);
    return refs;
  }

  // Freeze or unfreeze the unconditional transforms and the entropy model.
  // The glyph branch and the fusion taps stay trainable either way, which
  // is exactly the stage-2 fine-tune split.
  void set_train_base(bool on) {
    for (nn::Conv2d<T>* c : {&a1, &a2, &a3, &a4, &a5, &s1, &s2, &s3, &s4, &s5, &s_out})
      c->train_base = on;
    em.trainable = on;
  }

  void save(const std::string& path) {
    Checkpoint c;
    c.strings["model"] = "codec";
    c.scalars["ch"] = cfg.ch;
    c.scalars["z_ch"] = cfg.z_ch;
    c.scalars["version"] = version;
    auto refs = params();
    c.put_params(refs);
    c.save(path);
  }

  void load(const std::string& path) {
    Checkpoint c = Checkpoint::load(path);
    if (c.str("model") != "codec")
      throw std::runtime_error("codec: " + path + " holds a different model");
    c.expect("ch", cfg.ch);
    c.expect("z_ch", cfg.z_ch);
    version = int(c.scalar("version"));
    auto refs = params();
    c.get_params(refs);
  }

 private:
  static void check_size(const Tensor<T>& img) {
    if (img.rank() != 3 || img.dim(0) != 3)
      throw std::runtime_error("codec: image must be {3,H,W}");
    if (img.dim(1) % 8 != 0 || img.dim(2) % 8 != 0)
      throw std::runtime_error("codec: image size must be divisible by 8");
  }

  static Tensor<T> batch_of(const Tensor<T>& img) {
    return img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  }

  bool has_glyph_ = false;
  Tensor<T> u1_, u2_, u3_;
  Tensor<T> gu1_, gu2_, gu3_;
};

// Recompression consistency: run the image through the codec's transform
// pair and measure the mean squared distance of the result from the anchor
// reconstruction xbar. The latent is rounded exactly as the real coding
// path rounds it, with a straight-through estimator (identity in the
// backward pass) so the gradient reaching gimage is finite. Passing
// round_latent = false substitutes the continuous relaxation; gradient
// checks need it because a rounded latent is locally constant and
// therefore invisible to finite differences.
//
// image, xbar: {3,H,W}; glyph: {1,H,W} or empty. No parameters train here
// regardless of mode; only the input gradient is produced.
template <typename T>
T recompression_distance(CodecModel<T>& model, const Tensor<T>& image,
                         const Tensor<T>& glyph, const Tensor<T>& xbar,
                         Tensor<T>* gimage = nullptr, bool round_latent = true) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::runtime_error("recompression: image must be {3,H,W}");
  if (!image.same_shape(xbar))
    throw std::runtime_error("recompression: image and anchor shapes differ");
  const int H = image.dim(1), W = image.dim(2);
  const Cache mode = gimage ? Cache::kData : Cache::kNone;
  Tensor<T> x = image.reshaped({1, 3, H, W});
  Tensor<T> g = glyph.empty() ? Tensor<T>() : glyph.reshaped({1, 1, H, W});
  Tensor<T> y = model.analysis(x, g, mode);
  Tensor<T> yq = round_latent ? model.quantize(y) : y;
  Tensor<T> xr = model.synthesis(yq, g, mode);
  const Tensor<T> target = xbar.reshaped({1, 3, H, W});
  const T loss = nn::mse(xr, target);
  if (gimage) {
    Tensor<T> gy = model.synthesis_backward(nn::mse_grad(xr, target), false);
    Tensor<T> gx = model.analysis_backward(gy, false);
    *gimage = gx.reshaped({3, H, W});
  }
  return loss;
}

}  // namespace picd
