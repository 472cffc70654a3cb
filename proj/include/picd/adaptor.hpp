#pragma once

// Structural conditioning adaptors for the diffusion renderer.
//
// All three variants consume the codec reconstruction (xbar) and the
// rendered glyph map and steer the frozen UNet through its hook sites:
//
//   kControlNet  a trainable copy of the UNet encoder runs on the noisy
//                latent plus an embedded hint image, and its activations
//                re-enter the base net through zero-initialized taps at
//                the skip and mid junctions.
//   kStableSr    SPADE modulation at every UNet resolution, driven by the
//                frozen VAE's encodings of xbar and of the glyph map.
//   kHybrid      SPADE modulation driven by a richer stack: trainable
//                glyph and xbar encoders, the frozen VAE encoding of
//                xbar, and a pixel-unshuffle of xbar to latent resolution.
//
// Zero-initialized output layers make every variant an exact identity at
// creation: until training moves the zero weights, the hooked UNet
// computes precisely what the bare UNet computes.

#include <memory>
#include <string>
#include <vector>

#include "picd/diffusion.hpp"
#include "picd/nn.hpp"

namespace picd {

enum class AdaptorKind { kControlNet, kStableSr, kHybrid };

inline const char* adaptor_kind_name(AdaptorKind k) {
  switch (k) {
    case AdaptorKind::kControlNet: return "controlnet";
    case AdaptorKind::kStableSr: return "stablesr";
    case AdaptorKind::kHybrid: return "hybrid";
  }
  throw std::runtime_error("adaptor: bad kind");
}

inline AdaptorKind adaptor_kind_from(const std::string& s) {
  if (s == "controlnet") return AdaptorKind::kControlNet;
  if (s == "stablesr") return AdaptorKind::kStableSr;
  if (s == "hybrid") return AdaptorKind::kHybrid;
  throw std::runtime_error("adaptor: unknown kind '" + s + "'");
}

// Per-batch conditioning inputs. The VAE encodings are produced by the
// caller with the frozen VAE so the adaptor itself never owns it.
template <typename T>
struct CondInputs {
  Tensor<T> xbar;            // {N,3,64,64}
  Tensor<T> glyph;           // {N,1,64,64}; zeros in natural mode
  Tensor<T> vae_xbar;        // {N,z,16,16}
  Tensor<T> vae_glyph;       // {N,z,16,16}; used by kStableSr only
};

template <typename T>
struct AdaptorConfig {
  AdaptorKind kind = AdaptorKind::kHybrid;
  int unet_ch = 40;
  int vae_z = 4;
  int spade_hidden = 32;
  int enc_ch = 16;  // trainable encoder width (hybrid)

  int feature_channels() const {
    switch (kind) {
      case AdaptorKind::kStableSr: return 2 * vae_z;
      case AdaptorKind::kHybrid: return 2 * enc_ch + vae_z + 48;
      default: return 0;
    }
  }
};

template <typename T>
struct AdaptorModel : UNetHooks<T> {
  AdaptorConfig<T> cfg;

  // SPADE machinery (kStableSr, kHybrid).
  nn::Conv2d<T> trunk16, trunk8;
  nn::SiLU<T> trunk16_act, trunk8_act;
  nn::AvgPool2<T> pool;
  nn::Conv2d<T> gamma0, mu0, gamma1, mu1, gamma2, mu2;
  // Trainable feature encoders (kHybrid): two stride-2 stages each.
  nn::Conv2d<T> ge1, ge2, xe1, xe2;
  nn::SiLU<T> gea1, gea2, xea1, xea2;
  // Control branch (kControlNet).
  nn::Conv2d<T> clone_conv_in, clone_down;
  ResBlock<T> clone_d1a, clone_d1b, clone_m1, clone_m2;
  nn::Conv2d<T> he1, he2, he3;
  nn::SiLU<T> hea1, hea2;
  nn::Conv2d<T> zc_skip, zc_mid;

  AdaptorModel() = default;

  // base is required for kControlNet (the encoder copy); it may be null
  // for the SPADE variants.
  AdaptorModel(const AdaptorConfig<T>& c, const UNet<T>* base, Rng& rng) : cfg(c) {
    const int ch = c.unet_ch;
    if (c.kind == AdaptorKind::kControlNet) {
      if (!base) throw std::runtime_error("adaptor: controlnet needs the base unet");
      clone_conv_in = base->conv_in;
      clone_d1a = base->d1a;
      clone_d1b = base->d1b;
      clone_down = base->down;
      clone_m1 = base->m1;
      clone_m2 = base->m2;
      // The clone runs without spade sites of its own.
      clone_d1a.spade_site = clone_m1.spade_site = -1;
      he1 = nn::Conv2d<T>(4, 8, 3, 2, 1, rng);
      he2 = nn::Conv2d<T>(8, 16, 3, 2, 1, rng);
      he3 = nn::Conv2d<T>::zero_init(16, ch, 1, 1, 0);
      zc_skip = nn::Conv2d<T>::zero_init(ch, ch, 1, 1, 0);
      zc_mid = nn::Conv2d<T>::zero_init(2 * ch, 2 * ch, 1, 1, 0);
    } else {
      const int fc = c.feature_channels();
      trunk16 = nn::Conv2d<T>(fc, c.spade_hidden, 3, 1, 1, rng);
      trunk8 = nn::Conv2d<T>(c.spade_hidden, c.spade_hidden, 3, 1, 1, rng);
      gamma0 = nn::Conv2d<T>::zero_init(c.spade_hidden, ch, 1, 1, 0);
      mu0 = nn::Conv2d<T>::zero_init(c.spade_hidden, ch, 1, 1, 0);
      gamma1 = nn::Conv2d<T>::zero_init(c.spade_hidden, 2 * ch, 1, 1, 0);
      mu1 = nn::Conv2d<T>::zero_init(c.spade_hidden, 2 * ch, 1, 1, 0);
      gamma2 = nn::Conv2d<T>::zero_init(c.spade_hidden, ch, 1, 1, 0);
      mu2 = nn::Conv2d<T>::zero_init(c.spade_hidden, ch, 1, 1, 0);
      if (c.kind == AdaptorKind::kHybrid) {
        ge1 = nn::Conv2d<T>(1, c.enc_ch, 3, 2, 1, rng);
        ge2 = nn::Conv2d<T>(c.enc_ch, c.enc_ch, 3, 2, 1, rng);
        xe1 = nn::Conv2d<T>(3, c.enc_ch, 3, 2, 1, rng);
        xe2 = nn::Conv2d<T>(c.enc_ch, c.enc_ch, 3, 2, 1, rng);
      }
    }
  }

  // Must be called before each forward pass (or batch of passes) with the
  // conditioning for the current batch.
  void set_condition(const CondInputs<T>& cond) { cond_ = cond; }

  // ---- UNetHooks --------------------------------------------------------

  void begin(const Tensor<T>& z, const Tensor<T>& temb, Cache mode) override {
    mode_ = mode;
    if (cfg.kind == AdaptorKind::kControlNet) {
      begin_control(z, temb, mode);
    } else {
      begin_spade(mode);
    }
  }

  Tensor<T> spade(int site, Tensor<T> h, Cache mode) override {
    if (cfg.kind == AdaptorKind::kControlNet) return h;
    nn::Conv2d<T>& gc = site == 0 ? gamma0 : site == 1 ? gamma1 : gamma2;
    nn::Conv2d<T>& mc = site == 0 ? mu0 : site == 1 ? mu1 : mu2;
    const Tensor<T>& trunk = site == 1 ? t8_ : t16_;
    Tensor<T> g = gc.forward(trunk, mode);
    Tensor<T> m = mc.forward(trunk, mode);
    if (mode != Cache::kNone) {
      h_cache_[size_t(site)] = h;
      g_cache_[size_t(site)] = g;
    }
    Tensor<T> out = h;
    out.flat() = h.flat() * (T(1) + g.flat()) + m.flat();
    return out;
  }

  Tensor<T> spade_backward(int site, Tensor<T> gh) override {
    if (cfg.kind == AdaptorKind::kControlNet) return gh;
    const Tensor<T>& h = h_cache_[size_t(site)];
    const Tensor<T>& g = g_cache_[size_t(site)];
    nn::Conv2d<T>& gc = site == 0 ? gamma0 : site == 1 ? gamma1 : gamma2;
    nn::Conv2d<T>& mc = site == 0 ? mu0 : site == 1 ? mu1 : mu2;
    Tensor<T> gg = gh;
    gg.flat() = gh.flat() * h.flat();
    Tensor<T>& gtrunk = site == 1 ? gt8_ : gt16_;
    gtrunk.flat() += gc.backward(gg).flat();
    gtrunk.flat() += mc.backward(gh).flat();
    Tensor<T> out = gh;
    out.flat() = gh.flat() * (T(1) + g.flat());
    return out;
  }

  Tensor<T> add_skip(Tensor<T> h, Cache mode) override {
    if (cfg.kind != AdaptorKind::kControlNet) return h;
    h.flat() += zc_skip.forward(clone_skip_, mode).flat();
    return h;
  }

  Tensor<T> add_mid(Tensor<T> h, Cache mode) override {
    if (cfg.kind != AdaptorKind::kControlNet) return h;
    h.flat() += zc_mid.forward(clone_mid_, mode).flat();
    return h;
  }

  Tensor<T> add_skip_backward(Tensor<T> gh) override {
    if (cfg.kind == AdaptorKind::kControlNet)
      gclone_skip_.flat() += zc_skip.backward(gh).flat();
    return gh;
  }

  Tensor<T> add_mid_backward(Tensor<T> gh) override {
    if (cfg.kind == AdaptorKind::kControlNet)
      gclone_mid_.flat() += zc_mid.backward(gh).flat();
    return gh;
  }

  Tensor<T> end_backward(Tensor<T> gz) override {
    if (cfg.kind == AdaptorKind::kControlNet) return end_backward_control(std::move(gz));
    // SPADE trunks: push the accumulated site gradients back through the
    // shared feature path. Feature gradients reach the trainable encoders
    // only in full-cache mode; during guidance the conditioning is a
    // constant, so its gradient is irrelevant to the latent.
    Tensor<T> g16 = pool.backward(trunk8.backward(trunk8_act.backward(gt8_)));
    g16.flat() += gt16_.flat();
    Tensor<T> gfeat = trunk16.backward(trunk16_act.backward(g16));
    if (cfg.kind == AdaptorKind::kHybrid && mode_ == Cache::kFull) {
      Tensor<T> g_genc, rest, g_xenc, g_tail;
      nn::split_channels(gfeat, g_genc, rest, cfg.enc_ch);
      nn::split_channels(rest, g_xenc, g_tail, cfg.enc_ch);
      ge1.backward(gea1.backward(ge2.backward(gea2.backward(g_genc))));
      xe1.backward(xea1.backward(xe2.backward(xea2.backward(g_xenc))));
    }
    return gz;
  }

  // ---- parameters / io --------------------------------------------------

  void collect(const std::string& p, nn::ParamRefs<T>& out) {
    if (cfg.kind == AdaptorKind::kControlNet) {
      clone_conv_in.collect(p + ".clone_conv_in", out);
      clone_d1a.collect(p + ".clone_d1a", out);
      clone_d1b.collect(p + ".clone_d1b", out);
      clone_down.collect(p + ".clone_down", out);
      clone_m1.collect(p + ".clone_m1", out);
      clone_m2.collect(p + ".clone_m2", out);
      he1.collect(p + ".he1", out);
      he2.collect(p + ".he2", out);
      he3.collect(p + ".he3", out);
      zc_skip.collect(p + ".zc_skip", out);
      zc_mid.collect(p + ".zc_mid", out);
    } else {
      trunk16.collect(p + ".trunk16", out);
      trunk8.collect(p + ".trunk8", out);
      gamma0.collect(p + ".gamma0", out);
      mu0.collect(p + ".mu0", out);
      gamma1.collect(p + ".gamma1", out);
      mu1.collect(p + ".mu1", out);
      gamma2.collect(p + ".gamma2", out);
      mu2.collect(p + ".mu2", out);
      if (cfg.kind == AdaptorKind::kHybrid) {
        ge1.collect(p + ".ge1", out);
        ge2.collect(p + ".ge2", out);
        xe1.collect(p + ".xe1", out);
        xe2.collect(p + ".xe2", out);
      }
    }
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> refs;
    collect("adaptor", refs);
    return refs;
  }

  void save(const std::string& path) {
    Checkpoint c;
    c.strings["model"] = "adaptor";
    c.strings["kind"] = adaptor_kind_name(cfg.kind);
    c.scalars["unet_ch"] = cfg.unet_ch;
    c.scalars["vae_z"] = cfg.vae_z;
    c.scalars["spade_hidden"] = cfg.spade_hidden;
    c.scalars["enc_ch"] = cfg.enc_ch;
    auto refs = params();
    c.put_params(refs);
    c.save(path);
  }

  void load(const std::string& path) {
    Checkpoint c = Checkpoint::load(path);
    if (c.str("model") != "adaptor")
      throw std::runtime_error("adaptor: " + path + " holds a different model");
    if (c.str("kind") != adaptor_kind_name(cfg.kind))
      throw std::runtime_error("adaptor: " + path + " holds kind " + c.str("kind") +
                               ", expected " + adaptor_kind_name(cfg.kind));
    c.expect("unet_ch", cfg.unet_ch);
    c.expect("spade_hidden", cfg.spade_hidden);
    c.expect("enc_ch", cfg.enc_ch);
    auto refs = params();
    c.get_params(refs);
  }

 private:
  void begin_spade(Cache mode) {
    Tensor<T> feat;
    if (cfg.kind == AdaptorKind::kStableSr) {
      feat = nn::concat_channels(cond_.vae_xbar, cond_.vae_glyph);
    } else {
      Tensor<T> genc = gea2.forward(ge2.forward(
          gea1.forward(ge1.forward(cond_.glyph, mode), mode), mode), mode);
      Tensor<T> xenc = xea2.forward(xe2.forward(
          xea1.forward(xe1.forward(cond_.xbar, mode), mode), mode), mode);
      feat = nn::concat_channels(genc, xenc);
      feat = nn::concat_channels(feat, cond_.vae_xbar);
      feat = nn::concat_channels(feat, nn::pixel_unshuffle(cond_.xbar, 4));
    }
    t16_ = trunk16_act.forward(trunk16.forward(feat, mode), mode);
    t8_ = trunk8_act.forward(trunk8.forward(pool.forward(t16_), mode), mode);
    // Dimension note: the pooled trunk feeds site 1 at 8x8; gradient
    // accumulators are zeroed per pass.
    gt16_ = Tensor<T>(t16_.shape());
    gt8_ = Tensor<T>(t8_.shape());
  }

  void begin_control(const Tensor<T>& z, const Tensor<T>& temb, Cache mode) {
    Tensor<T> hint = nn::concat_channels(cond_.xbar, cond_.glyph);
    Tensor<T> hf = he3.forward(
        hea2.forward(he2.forward(hea1.forward(he1.forward(hint, mode), mode), mode), mode),
        mode);
    Tensor<T> h = clone_conv_in.forward(z, mode);
    h.flat() += hf.flat();
    h = clone_d1a.forward(h, temb, nullptr, mode);
    clone_skip_ = clone_d1b.forward(h, temb, nullptr, mode);
    h = clone_down.forward(clone_skip_, mode);
    h = clone_m1.forward(h, temb, nullptr, mode);
    clone_mid_ = clone_m2.forward(h, temb, nullptr, mode);
    gclone_skip_ = Tensor<T>(clone_skip_.shape());
    gclone_mid_ = Tensor<T>(clone_mid_.shape());
  }

  Tensor<T> end_backward_control(Tensor<T> gz) {
    // Clone gradients do not flow into the shared timestep embedding: the
    // embedding path is frozen whenever the control branch trains, and
    // the embedding does not depend on z, so the latent gradient is
    // unaffected either way.
    Tensor<T> gtemb_sink({gclone_mid_.dim(0), int(clone_d1a.temb_proj.W.cols())});
    Tensor<T> g = clone_m2.backward(gclone_mid_, gtemb_sink);
    g = clone_m1.backward(g, gtemb_sink);
    g = clone_down.backward(g);
    g.flat() += gclone_skip_.flat();
    g = clone_d1b.backward(g, gtemb_sink);
    g = clone_d1a.backward(g, gtemb_sink);
    Tensor<T> ghf = g;  // the hint add is identity in h
    Tensor<T> gzc = clone_conv_in.backward(g);
    if (mode_ == Cache::kFull)
      he1.backward(hea1.backward(he2.backward(hea2.backward(he3.backward(ghf)))));
    gz.flat() += gzc.flat();
    return gz;
  }

  CondInputs<T> cond_;
  Cache mode_ = Cache::kNone;
  Tensor<T> t16_, t8_, gt16_, gt8_;
  Tensor<T> h_cache_[3], g_cache_[3];
  Tensor<T> clone_skip_, clone_mid_, gclone_skip_, gclone_mid_;
};

}  // namespace picd
