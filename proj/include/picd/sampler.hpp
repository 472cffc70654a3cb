#pragma once

// DDPM ancestral sampling with classifier-free guidance and instance-level
// gradient guidance.
//
// One Sampler drives one decode over frozen models. Each step predicts
// noise through the hooked UNet (adaptor features enter both CFG branches;
// only the text prompt is dropped in the null branch), takes the standard
// ancestral update, and, when guidance weights are set, subtracts the
// gradient of
//
//   L(z_t) = zeta1 * ocr_loss(decode(z0_hat), layout)
//          + zeta2 * recompression_distance(decode(z0_hat), codec, glyph)
//
// from the new latent. z0_hat is the Tweedie posterior-mean estimate at
// the pre-step latent, and the gradient is taken with respect to that
// pre-step latent through the full chain: noise predictor, Tweedie
// formula, latent denormalization, and VAE decoder. Non-finite gradients
// skip the adjustment for that step and are counted, never fatal.
//
// Sampling is deterministic in (seed, inputs, config): the only random
// draws are the initial latent and the per-step posterior noise, in fixed
// order, and sigma_1 = 0 makes the last denoise deterministic.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "picd/adaptor.hpp"
#include "picd/codec.hpp"
#include "picd/diffusion.hpp"
#include "picd/ocr_net.hpp"
#include "picd/rng.hpp"
#include "picd/text.hpp"

namespace picd {

struct GuidanceConfig {
  float zeta1 = 0.0f;  // OCR consistency weight
  float zeta2 = 0.0f;  // recompression consistency weight
  float omega = 0.0f;  // classifier-free guidance weight
  int steps = 250;     // sampling steps T

  void validate() const {
    if (steps < 1) throw std::invalid_argument("guidance: steps must be >= 1");
    if (zeta1 < 0.0f || zeta2 < 0.0f)
      throw std::invalid_argument("guidance: weights must be nonnegative");
  }

  bool guided() const { return zeta1 > 0.0f || zeta2 > 0.0f; }
};

struct GuidanceTracePoint {
  int t = 0;
  double loss = 0.0;
};

struct SampleStats {
  int guided_steps = 0;
  int skipped_steps = 0;  // guidance adjustments dropped for non-finite values
  std::vector<GuidanceTracePoint> trace;
};

template <typename T>
class Sampler {
 public:
  // Test instrumentation: bypass the latent rounding inside the
  // recompression term. Finite-difference gradient checks set this; the
  // rounded loss is piecewise constant, so differences cannot see it.
  bool relax_quantization = false;

  Sampler(UNet<T>& score, Vae<T>& vae, const GuidanceConfig& cfg)
      : cfg_(cfg), sched_(cfg.steps), score_(&score), vae_(&vae) {
    cfg_.validate();
    null_prompt_ = prompt_embedding<T>({std::string()});
    prompt_ = null_prompt_;
  }

  void set_prompt(const std::string& p) { prompt_ = prompt_embedding<T>({p}); }

  // The caller keeps ownership and must have set the adaptor's condition.
  void set_adaptor(AdaptorModel<T>* a) { adaptor_ = a; }

  void set_ocr_target(CharCnn<T>* surrogate, TextLayout layout) {
    surrogate_ = surrogate;
    layout_ = std::move(layout);
  }

  void set_recompression(CodecModel<T>* codec, Tensor<T> xbar, Tensor<T> glyph) {
    codec_ = codec;
    rec_xbar_ = std::move(xbar);
    rec_glyph_ = std::move(glyph);
  }

  const DiffusionSchedule& schedule() const { return sched_; }

  // Classifier-free noise prediction: (1 + omega) * eps_cond - omega *
  // eps_null, adaptor features active in both branches. With omega = 0 the
  // conditional branch is returned untouched (and, in a caching mode, its
  // activations stay valid for one backward pass).
  Tensor<T> cfg_predict(const Tensor<T>& z, int t, Cache mode) {
    Tensor<T> ec = score_->forward(z, {t}, prompt_, adaptor_, mode);
    if (cfg_.omega == 0.0f) return ec;
    Tensor<T> en = score_->forward(z, {t}, null_prompt_, adaptor_, mode);
    Tensor<T> e = ec;
    e.flat() = (T(1) + T(cfg_.omega)) * ec.flat() - T(cfg_.omega) * en.flat();
    return e;
  }

  // One ancestral update from t to t-1 with a precomputed noise prediction.
  // Draws posterior noise from rng except at t = 1, where sigma is zero.
  Tensor<T> ddpm_step(const Tensor<T>& z, int t, const Tensor<T>& eps, Rng& rng) const {
    const double ab = sched_.abar(t);
    const double a = sched_.alpha[size_t(t - 1)];
    const double beta = sched_.beta[size_t(t - 1)];
    Tensor<T> out = z;
    const T c1 = T(1.0 / std::sqrt(a));
    const T c2 = T(beta / std::sqrt(1.0 - ab));
    out.flat() = c1 * (z.flat() - c2 * eps.flat());
    const double sig = sched_.sigma(t);
    if (sig > 0.0)
      for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += T(sig * rng.normal());
    return out;
  }

  // Guidance loss at the pre-step latent. eps_out (optional) receives the
  // CFG noise prediction so a caller can reuse it for the ancestral update;
  // gz (optional) receives dL/dz_t through the full chain.
  T guidance_loss(const Tensor<T>& z, int t, Tensor<T>* eps_out, Tensor<T>* gz) {
    const Cache mode = gz ? Cache::kData : Cache::kNone;
    const T w = T(cfg_.omega);
    Tensor<T> eps;
    const bool two_branch = cfg_.omega != 0.0f;
    if (!two_branch) {
      eps = score_->forward(z, {t}, prompt_, adaptor_, mode);
    } else {
      // Value-only passes here; each branch is re-run before its backward
      // below because the layers cache one forward at a time.
      eps = cfg_predict(z, t, Cache::kNone);
    }
    if (eps_out) *eps_out = eps;

    Tensor<T> z0 = posterior_mean(z, eps, sched_, t);
    Tensor<T> x0 = vae_->decode(vae_->denormalize(z0), mode);
    Tensor<T> img = x0.slice(0);

    T loss = T(0);
    Tensor<T> gimg({3, img.dim(1), img.dim(2)});
    if (cfg_.zeta1 > 0.0f) {
      if (!surrogate_) throw std::runtime_error("sampler: zeta1 set but no surrogate");
      Tensor<T> g1;
      loss += T(cfg_.zeta1) * ocr_loss(*surrogate_, img, layout_, gz ? &g1 : nullptr);
      if (gz) gimg.flat() += T(cfg_.zeta1) * g1.flat();
    }
    if (cfg_.zeta2 > 0.0f) {
      if (!codec_) throw std::runtime_error("sampler: zeta2 set but no codec");
      Tensor<T> g2;
      loss += T(cfg_.zeta2) * recompression_distance(*codec_, img, rec_glyph_, rec_xbar_,
                                                     gz ? &g2 : nullptr,
                                                     !relax_quantization);
      if (gz) gimg.flat() += T(cfg_.zeta2) * g2.flat();
    }
    if (!gz) return loss;

    // Back through the VAE decode and the channel denormalization.
    Tensor<T> gz0 = vae_->decode_backward(gimg.reshaped({1, 3, img.dim(1), img.dim(2)}));
    scale_by_sigma(gz0);

    // Tweedie: z0 = (z - sqrt(1 - ab) * eps(z)) / sqrt(ab). The z gradient
    // has the direct term and the term through the noise predictor.
    const T ab = T(sched_.abar(t));
    const T inv_sab = T(1) / std::sqrt(ab);
    Tensor<T> geps = gz0;
    geps.flat() *= -std::sqrt(T(1) - ab) * inv_sab;

    Tensor<T> gzt;
    if (!two_branch) {
      gzt = score_->backward(geps);
    } else {
      Tensor<T> gn = geps;
      gn.flat() *= -w;
      score_->forward(z, {t}, null_prompt_, adaptor_, Cache::kData);
      gzt = score_->backward(gn);
      Tensor<T> gc = geps;
      gc.flat() *= T(1) + w;
      score_->forward(z, {t}, prompt_, adaptor_, Cache::kData);
      gzt.flat() += score_->backward(gc).flat();
    }
    gzt.flat() += inv_sab * gz0.flat();
    *gz = std::move(gzt);
    return loss;
  }

  // Full decode: z_T ~ N(0,I), ancestral loop with guidance, VAE decode,
  // clamp to [0,1]. Returns {3,64,64} for the standard 16x16 latent grid.
  Tensor<T> sample(uint64_t seed, SampleStats* stats = nullptr, int lh = 16, int lw = 16) {
    Rng rng(seed);
    Tensor<T> z = Tensor<T>::randn({1, score_->cfg.z_ch, lh, lw}, rng);
    const bool guided = cfg_.guided();
    for (int t = cfg_.steps; t >= 1; --t) {
      Tensor<T> eps, gz;
      T loss = T(0);
      if (guided) {
        loss = guidance_loss(z, t, &eps, &gz);
      } else {
        eps = cfg_predict(z, t, Cache::kNone);
      }
      Tensor<T> znext = ddpm_step(z, t, eps, rng);
      if (guided) {
        if (std::isfinite(double(loss)) && all_finite(gz)) {
          znext.flat() -= gz.flat();
          if (stats) {
            ++stats->guided_steps;
            stats->trace.push_back({t, double(loss)});
          }
        } else if (stats) {
          ++stats->skipped_steps;
        }
      }
      z = std::move(znext);
    }
    return clamp01(vae_->decode(vae_->denormalize(z), Cache::kNone).slice(0));
  }

 private:
  void scale_by_sigma(Tensor<T>& g) const {
    const int C = g.dim(1), HW = g.dim(2) * g.dim(3);
    for (int n = 0; n < g.dim(0); ++n)
      for (int c = 0; c < C; ++c) {
        const T s = vae_->latent_sigma[c];
        Eigen::Map<EArray<T>>(g.data() + (Eigen::Index(n) * C + c) * HW, HW) *= s;
      }
  }

  GuidanceConfig cfg_;
  DiffusionSchedule sched_;
  UNet<T>* score_ = nullptr;
  Vae<T>* vae_ = nullptr;
  AdaptorModel<T>* adaptor_ = nullptr;
  CharCnn<T>* surrogate_ = nullptr;
  CodecModel<T>* codec_ = nullptr;
  TextLayout layout_;
  Tensor<T> rec_xbar_, rec_glyph_;
  Tensor<T> prompt_, null_prompt_;
};

}  // namespace picd
