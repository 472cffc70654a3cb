#include "picd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "picd/font.hpp"
#include "picd/glyph.hpp"
#include "picd/metrics.hpp"

namespace picd {

namespace {

using nn::Cache;

Tensorf stack(const std::vector<Tensorf>& items, const std::vector<int>& idx) {
  const Tensorf& f = items[size_t(idx[0])];
  Tensorf out({int(idx.size()), f.dim(0), f.dim(1), f.dim(2)});
  for (size_t i = 0; i < idx.size(); ++i) out.set_slice(int(i), items[size_t(idx[i])]);
  return out;
}

std::vector<int> iota_range(int begin, int n) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[size_t(i)] = begin + i;
  return idx;
}

std::vector<int> draw_batch(Rng& rng, int pool, int n) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[size_t(i)] = rng.uniform_int(0, pool - 1);
  return idx;
}

// Accumulates the interval-averaged loss curve and rejects divergence.
struct LossMeter {
  const char* who;
  int every;
  std::vector<double>* out;
  double sum = 0;
  int n = 0;

  void add(int step, double loss) {
    if (!std::isfinite(loss))
      throw std::runtime_error(std::string(who) + ": loss diverged at step " +
                               std::to_string(step));
    sum += loss;
    if (++n == every) flush();
  }

  void flush() {
    if (n > 0) out->push_back(sum / n);
    sum = 0;
    n = 0;
  }
};

void require_data(const Dataset& d, const char* who) {
  if (d.size() == 0) throw std::invalid_argument(std::string(who) + ": empty dataset");
}

// Normalized posterior-mean latents of every image, in index order.
std::vector<Tensorf> encode_latents(Vae<float>& vae, const std::vector<Tensorf>& images) {
  std::vector<Tensorf> out;
  out.reserve(images.size());
  const int M = int(images.size());
  for (int b = 0; b < M; b += 16) {
    const int n = std::min(16, M - b);
    Tensorf z = vae.normalize(vae.encode_mean(stack(images, iota_range(b, n))));
    for (int i = 0; i < n; ++i) out.push_back(z.slice(i));
  }
  return out;
}

Tensorf prompt_rows(const std::vector<TextLayout>& layouts) {
  std::vector<std::string> prompts;
  prompts.reserve(layouts.size());
  for (const TextLayout& z : layouts) prompts.push_back(screen_prompt(z));
  return prompt_embedding<float>(prompts);
}

void copy_row(const Tensorf& src, int si, Tensorf& dst, int di) {
  const int C = src.dim(1);
  for (int c = 0; c < C; ++c) dst(di, c) = src(si, c);
}

// Mean denoising loss over fixed (t, eps) draws, one pair per sample. The
// draws depend only on the seed and the latent shapes, so a frozen model,
// an adapted model and a conditioned model can be scored on identical
// noise. bind, when set, prepares hooks for the batch [begin, begin+n).
double fixed_denoise_loss(UNet<float>& unet, const DiffusionSchedule& sched,
                          const std::vector<Tensorf>& z0, const Tensorf& prompts,
                          uint64_t seed,
                          const std::function<UNetHooks<float>*(int, int)>& bind) {
  const int M = int(z0.size());
  Rng rng(seed);
  std::vector<int> ts(M);
  std::vector<Tensorf> eps(M);
  for (int i = 0; i < M; ++i) {
    ts[size_t(i)] = rng.uniform_int(1, sched.steps);
    eps[size_t(i)] = Tensorf::randn(z0[size_t(i)].shape(), rng);
  }
  double total = 0;
  for (int b = 0; b < M; b += 8) {
    const int n = std::min(8, M - b);
    const Tensorf& f = z0[size_t(b)];
    Tensorf zt({n, f.dim(0), f.dim(1), f.dim(2)});
    Tensorf epsb({n, f.dim(0), f.dim(1), f.dim(2)});
    Tensorf pb({n, prompts.dim(1)});
    std::vector<int> tb(n);
    for (int i = 0; i < n; ++i) {
      const int s = b + i;
      tb[size_t(i)] = ts[size_t(s)];
      const float sa = float(std::sqrt(sched.abar(ts[size_t(s)])));
      const float sb = float(std::sqrt(1.0 - sched.abar(ts[size_t(s)])));
      Tensorf zi = z0[size_t(s)];
      zi.flat() = sa * zi.flat() + sb * eps[size_t(s)].flat();
      zt.set_slice(i, zi);
      epsb.set_slice(i, eps[size_t(s)]);
      copy_row(prompts, s, pb, i);
    }
    UNetHooks<float>* hooks = bind ? bind(b, n) : nullptr;
    Tensorf ehat = unet.forward(zt, tb, pb, hooks, Cache::kNone);
    total += double(nn::mse(ehat, epsb)) * n;
  }
  return total / M;
}

// Forward-difference edge mismatch, averaged over all difference entries of
// both axes; the gradient accumulates into gxr scaled by weight.
float edge_penalty(const Tensorf& xr, const Tensorf& x, Tensorf& gxr, float weight) {
  const int N = xr.dim(0), C = xr.dim(1), H = xr.dim(2), W = xr.dim(3);
  const double count = double(N) * C * (double(H - 1) * W + double(H) * (W - 1));
  double loss = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i + 1 < H; ++i)
        for (int j = 0; j < W; ++j) {
          const double d = double(xr(n, c, i + 1, j) - xr(n, c, i, j)) -
                           double(x(n, c, i + 1, j) - x(n, c, i, j));
          loss += d * d;
          const float g = float(weight * 2.0 * d / count);
          gxr(n, c, i + 1, j) += g;
          gxr(n, c, i, j) -= g;
        }
      for (int i = 0; i < H; ++i)
        for (int j = 0; j + 1 < W; ++j) {
          const double d = double(xr(n, c, i, j + 1) - xr(n, c, i, j)) -
                           double(x(n, c, i, j + 1) - x(n, c, i, j));
          loss += d * d;
          const float g = float(weight * 2.0 * d / count);
          gxr(n, c, i, j + 1) += g;
          gxr(n, c, i, j) -= g;
        }
    }
  return float(weight * loss / count);
}

// Quantized round-trip quality on a validation set: mean PSNR and the
// model-estimated bits per pixel.
double codec_val_eval(CodecModel<float>& codec, const Dataset& val, bool cond,
                      double* bpp_out) {
  double ps = 0, bits = 0, px = 0;
  const int M = val.size();
  for (int b = 0; b < M; b += 8) {
    const int n = std::min(8, M - b);
    Tensorf x = stack(val.images, iota_range(b, n));
    Tensorf g = cond ? stack(val.glyphs, iota_range(b, n)) : Tensorf();
    Tensorf yq = codec.quantize(codec.analysis(x, g, Cache::kNone));
    Tensorf xr = codec.synthesis(yq, g, Cache::kNone);
    for (int i = 0; i < n; ++i) ps += double(psnr(clamp01(xr.slice(i)), x.slice(i)));
    bits += double(codec.em.bits(yq));
    px += double(n) * x.dim(2) * x.dim(3);
  }
  if (bpp_out) *bpp_out = bits / px;
  return ps / M;
}

}  // namespace

Dataset load_dataset(const CorpusManifest& m, int begin, int end) {
  if (begin < 0 || end > m.count || begin >= end)
    throw std::invalid_argument("load_dataset: bad range [" + std::to_string(begin) +
                                ", " + std::to_string(end) + ") of " +
                                std::to_string(m.count));
  Dataset d;
  d.images.reserve(size_t(end - begin));
  d.layouts.reserve(size_t(end - begin));
  d.glyphs.reserve(size_t(end - begin));
  for (int i = begin; i < end; ++i) {
    ScreenSample s = load_sample(m, i);
    d.glyphs.push_back(render_glyph(s.layout));
    d.images.push_back(std::move(s.image));
    d.layouts.push_back(std::move(s.layout));
  }
  return d;
}

std::string screen_prompt(const TextLayout& z) {
  std::string p = "a screenshot with text:";
  for (const WordRecord& w : z.words) {
    p += ' ';
    p += w.content;
  }
  return p;
}

// ---------------------------------------------------------------------------
// VAE

TrainReport train_vae(Vae<float>& vae, const Dataset& train, const Dataset& val,
                      const VaeTrainConfig& cfg) {
  require_data(train, "train_vae");
  Rng rng(cfg.seed);
  auto refs = vae.params();
  nn::Adam<float> adam(cfg.lr);
  TrainReport rep;
  LossMeter meter{"train_vae", cfg.log_every, &rep.losses};
  const int zc = vae.cfg.z_ch;
  // Soft bounds on the predicted log-variance; outside them the sample and
  // the KL term use the clamped value and the gradient is cut.
  const float lv_lo = -12.0f, lv_hi = 6.0f;

  for (int step = 1; step <= cfg.steps; ++step) {
    Tensorf x = stack(train.images, draw_batch(rng, train.size(), cfg.batch));
    nn::zero_grads(refs);
    Tensorf enc = vae.encode(x, Cache::kFull);
    const int N = enc.dim(0), H = enc.dim(2), W = enc.dim(3);
    Tensorf z({N, zc, H, W}), noise({N, zc, H, W});
    double kl = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < zc; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const float mu = enc(n, c, h, w);
            const float lv = std::clamp(enc(n, zc + c, h, w), lv_lo, lv_hi);
            const float e = float(rng.normal());
            noise(n, c, h, w) = e;
            z(n, c, h, w) = mu + std::exp(0.5f * lv) * e;
            kl += 0.5 * (double(mu) * mu + std::exp(double(lv)) - 1.0 - lv);
          }
    const double kl_count = double(N) * zc * H * W;
    kl /= kl_count;
    Tensorf dec = vae.decode(z, Cache::kFull);
    const float rec = nn::mse(dec, x);
    const double loss = double(rec) + double(cfg.kl_weight) * kl;

    Tensorf gz = vae.decode_backward(nn::mse_grad(dec, x));
    Tensorf genc({N, 2 * zc, H, W});
    const float kscale = cfg.kl_weight / float(kl_count);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < zc; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const float mu = enc(n, c, h, w);
            const float lv_raw = enc(n, zc + c, h, w);
            const bool inside = lv_raw > lv_lo && lv_raw < lv_hi;
            const float lv = std::clamp(lv_raw, lv_lo, lv_hi);
            const float g = gz(n, c, h, w);
            genc(n, c, h, w) = g + kscale * mu;
            const float glv = g * noise(n, c, h, w) * 0.5f * std::exp(0.5f * lv) +
                              kscale * 0.5f * (std::exp(lv) - 1.0f);
            genc(n, zc + c, h, w) = inside ? glv : 0.0f;
          }
    vae.encode_backward(genc);
    adam.step(refs);
    meter.add(step, loss);
  }
  meter.flush();

  // Per-channel statistics of the mean latents; the diffusion stack and its
  // samplers run in the space normalized by them.
  const int stat_n = std::min(train.size(), 512);
  std::vector<double> sum(zc, 0.0), sumsq(size_t(zc), 0.0);
  double count = 0;
  for (int b = 0; b < stat_n; b += 16) {
    const int n = std::min(16, stat_n - b);
    Tensorf mu = vae.encode_mean(stack(train.images, iota_range(b, n)));
    const int H = mu.dim(2), W = mu.dim(3);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < zc; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const double v = mu(i, c, h, w);
            sum[size_t(c)] += v;
            sumsq[size_t(c)] += v * v;
          }
    count += double(n) * mu.dim(2) * mu.dim(3);
  }
  for (int c = 0; c < zc; ++c) {
    const double mean = sum[size_t(c)] / count;
    const double var = std::max(sumsq[size_t(c)] / count - mean * mean, 1e-8);
    vae.latent_mu[c] = float(mean);
    vae.latent_sigma[c] = std::max(float(std::sqrt(var)), 1e-3f);
  }

  if (val.size() > 0) {
    double ps = 0;
    for (int b = 0; b < val.size(); b += 16) {
      const int n = std::min(16, val.size() - b);
      Tensorf x = stack(val.images, iota_range(b, n));
      Tensorf xr = vae.decode(vae.encode_mean(x), Cache::kNone);
      for (int i = 0; i < n; ++i) ps += double(psnr(clamp01(xr.slice(i)), x.slice(i)));
    }
    rep.metrics["val_psnr"] = ps / val.size();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Score model

namespace {

// Shared loop for score training and the low-rank fine-tune: sample a
// timestep and a noise per batch element, corrupt the latent, regress the
// noise. Prompt rows fall back to the null embedding with the configured
// probability so the model also learns the unconditional branch.
TrainReport denoise_training(UNet<float>& unet, const std::vector<Tensorf>& z0,
                             const Tensorf& prompts, const DiffusionSchedule& sched,
                             uint64_t seed, int steps, int batch, float lr,
                             float prompt_dropout, int log_every, const char* who) {
  Rng rng(seed);
  Tensorf null_p = prompt_embedding<float>({""});
  auto refs = unet.params();
  nn::Adam<float> adam(lr);
  TrainReport rep;
  LossMeter meter{who, log_every, &rep.losses};
  const int M = int(z0.size());

  for (int step = 1; step <= steps; ++step) {
    std::vector<int> idx = draw_batch(rng, M, batch);
    const Tensorf& f = z0[size_t(idx[0])];
    Tensorf zt({batch, f.dim(0), f.dim(1), f.dim(2)});
    Tensorf eps({batch, f.dim(0), f.dim(1), f.dim(2)});
    Tensorf pb({batch, prompts.dim(1)});
    std::vector<int> tb(batch);
    for (int i = 0; i < batch; ++i) {
      tb[size_t(i)] = rng.uniform_int(1, sched.steps);
      const bool drop = rng.uniform() < double(prompt_dropout);
      Tensorf e = Tensorf::randn(f.shape(), rng);
      const float sa = float(std::sqrt(sched.abar(tb[size_t(i)])));
      const float sb = float(std::sqrt(1.0 - sched.abar(tb[size_t(i)])));
      Tensorf zi = z0[size_t(idx[size_t(i)])];
      zi.flat() = sa * zi.flat() + sb * e.flat();
      zt.set_slice(i, zi);
      eps.set_slice(i, e);
      if (drop)
        copy_row(null_p, 0, pb, i);
      else
        copy_row(prompts, idx[size_t(i)], pb, i);
    }
    nn::zero_grads(refs);
    Tensorf ehat = unet.forward(zt, tb, pb, nullptr, Cache::kFull);
    const float loss = nn::mse(ehat, eps);
    unet.backward(nn::mse_grad(ehat, eps));
    adam.step(refs);
    meter.add(step, loss);
  }
  meter.flush();
  return rep;
}

}  // namespace

TrainReport train_score(UNet<float>& unet, Vae<float>& vae, const Dataset& train,
                        const Dataset& val, const ScoreTrainConfig& cfg) {
  require_data(train, "train_score");
  if (unet.cfg.z_ch != vae.cfg.z_ch)
    throw std::invalid_argument("train_score: latent channel mismatch");
  if (cfg.sched_steps < 1) throw std::invalid_argument("train_score: sched_steps < 1");
  DiffusionSchedule sched(cfg.sched_steps);
  unet.sched_steps = cfg.sched_steps;

  std::vector<Tensorf> z0 = encode_latents(vae, train.images);
  Tensorf prompts = prompt_rows(train.layouts);
  TrainReport rep = denoise_training(unet, z0, prompts, sched, cfg.seed, cfg.steps,
                                     cfg.batch, cfg.lr, cfg.prompt_dropout,
                                     cfg.log_every, "train_score");

  if (val.size() > 0) {
    std::vector<Tensorf> vz0 = encode_latents(vae, val.images);
    Tensorf vprompts = prompt_rows(val.layouts);
    rep.metrics["val_loss"] = fixed_denoise_loss(unet, sched, vz0, vprompts,
                                                 mix_seed(cfg.seed, 0x76616c), nullptr);
  }
  return rep;
}

TrainReport finetune_lora(UNet<float>& unet, Vae<float>& vae, const Dataset& train,
                          const Dataset& val, const LoraTrainConfig& cfg) {
  require_data(train, "finetune_lora");
  if (unet.sched_steps < 1)
    throw std::runtime_error("finetune_lora: the score model has no schedule; train it first");
  DiffusionSchedule sched(unet.sched_steps);
  Rng rng(mix_seed(cfg.seed, 0x6c6f7261));

  std::vector<Tensorf> z0 = encode_latents(vae, train.images);
  Tensorf prompts = prompt_rows(train.layouts);
  std::vector<Tensorf> vz0;
  Tensorf vprompts;
  if (val.size() > 0) {
    vz0 = encode_latents(vae, val.images);
    vprompts = prompt_rows(val.layouts);
  }
  const uint64_t val_seed = mix_seed(cfg.seed, 0x76616c);

  // Baseline before the adapters exist, on the same fixed draws the
  // fine-tuned model is scored with.
  double base_val = 0;
  if (val.size() > 0)
    base_val = fixed_denoise_loss(unet, sched, vz0, vprompts, val_seed, nullptr);

  unet.add_lora(cfg.rank, cfg.scale, rng);
  unet.set_train_base(false);
  TrainReport rep = denoise_training(unet, z0, prompts, sched, cfg.seed, cfg.steps,
                                     cfg.batch, cfg.lr, cfg.prompt_dropout,
                                     cfg.log_every, "finetune_lora");

  auto refs = unet.params();
  Eigen::Index total = 0, tuned = 0;
  for (const auto& r : refs) {
    total += r.size;
    if (r.trainable) tuned += r.size;
  }
  rep.metrics["lora_param_frac"] = double(tuned) / double(total);
  if (val.size() > 0) {
    rep.metrics["base_val_loss"] = base_val;
    rep.metrics["val_loss"] =
        fixed_denoise_loss(unet, sched, vz0, vprompts, val_seed, nullptr);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Conditional codec

TrainReport train_codec(CodecModel<float>& codec, const Dataset& train,
                        const Dataset& val, const CodecTrainConfig& cfg) {
  require_data(train, "train_codec");
  Rng rng(cfg.seed);
  TrainReport rep;
  LossMeter meter{"train_codec", cfg.log_every, &rep.losses};
  auto refs = codec.params();
  const double px = double(train.images[0].dim(1)) * train.images[0].dim(2);

  auto stage = [&](int steps, bool cond, nn::Adam<float>& adam) {
    for (int step = 1; step <= steps; ++step) {
      std::vector<int> idx = draw_batch(rng, train.size(), cfg.batch);
      Tensorf x = stack(train.images, idx);
      Tensorf g = cond ? stack(train.glyphs, idx) : Tensorf();
      nn::zero_grads(refs);

      Tensorf y = codec.analysis(x, g, Cache::kFull);
      Tensorf ynoisy = y;
      for (Eigen::Index i = 0; i < ynoisy.size(); ++i)
        ynoisy[i] += float(rng.uniform(-0.5, 0.5));

      Tensorf gy(y.shape());
      const float gscale = 1.0f / float(cfg.batch * px);
      const float rate = codec.em.bits_and_grads(ynoisy, &gy, gscale) * gscale;

      Tensorf xr = codec.synthesis(ynoisy, g, Cache::kFull);
      const float dist = nn::mse(xr, x);
      Tensorf gxr = nn::mse_grad(xr, x);
      gxr.flat() *= cfg.lambda;
      float loss = rate + cfg.lambda * dist;
      if (cfg.edge_proxy) loss += edge_penalty(xr, x, gxr, 0.1f * cfg.lambda);

      gy.flat() += codec.synthesis_backward(gxr, cond).flat();
      codec.analysis_backward(gy, cond);
      if (cond) codec.dup_backward();
      adam.step(refs);
      meter.add(step, loss);
    }
    meter.flush();
  };

  {
    nn::Adam<float> adam(cfg.lr);
    stage(cfg.stage1_steps, false, adam);
  }
  if (val.size() > 0) {
    double bpp = 0;
    rep.metrics["stage1_val_psnr"] = codec_val_eval(codec, val, false, &bpp);
    rep.metrics["stage1_val_bpp"] = bpp;
  }

  codec.set_train_base(false);
  {
    nn::Adam<float> adam(cfg.lr);
    stage(cfg.stage2_steps, true, adam);
  }
  codec.set_train_base(true);
  if (val.size() > 0) {
    double bpp = 0;
    rep.metrics["stage2_val_psnr"] = codec_val_eval(codec, val, true, &bpp);
    rep.metrics["val_bpp"] = bpp;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Adaptor

namespace {

// Conditioning bundle in dataset order: codec round trips, their VAE
// encodings, normalized clean latents and prompt rows.
struct CondSet {
  std::vector<Tensorf> z0, xbar, vae_xbar, vae_glyph;
  Tensorf prompts;
};

CondSet build_cond_set(Vae<float>& vae, CodecModel<float>& codec, const Dataset& d) {
  CondSet s;
  const int M = d.size();
  s.z0 = encode_latents(vae, d.images);
  s.prompts = prompt_rows(d.layouts);
  s.xbar.reserve(size_t(M));
  for (int i = 0; i < M; ++i)
    s.xbar.push_back(
        codec.decode_image(codec.encode_image(d.images[size_t(i)], d.glyphs[size_t(i)]),
                           d.glyphs[size_t(i)]));
  s.vae_xbar = encode_latents(vae, s.xbar);
  std::vector<Tensorf> glyph3(M);
  for (int i = 0; i < M; ++i) {
    const Tensorf& g = d.glyphs[size_t(i)];
    Tensorf g3({3, g.dim(1), g.dim(2)});
    for (int c = 0; c < 3; ++c)
      g3.flat().segment(Eigen::Index(c) * g.dim(1) * g.dim(2), g.dim(1) * g.dim(2)) =
          g.flat();
    glyph3[size_t(i)] = std::move(g3);
  }
  s.vae_glyph = encode_latents(vae, glyph3);
  return s;
}

CondInputs<float> cond_batch(const CondSet& s, const Dataset& d,
                             const std::vector<int>& idx) {
  CondInputs<float> c;
  c.xbar = stack(s.xbar, idx);
  c.glyph = stack(d.glyphs, idx);
  c.vae_xbar = stack(s.vae_xbar, idx);
  c.vae_glyph = stack(s.vae_glyph, idx);
  return c;
}

}  // namespace

TrainReport train_adaptor(AdaptorModel<float>& adaptor, UNet<float>& unet,
                          Vae<float>& vae, CodecModel<float>& codec,
                          const Dataset& train, const Dataset& val,
                          const AdaptorTrainConfig& cfg) {
  require_data(train, "train_adaptor");
  if (unet.sched_steps < 1)
    throw std::runtime_error("train_adaptor: the score model has no schedule; train it first");
  DiffusionSchedule sched(unet.sched_steps);
  Rng rng(cfg.seed);

  CondSet ts = build_cond_set(vae, codec, train);
  Tensorf null_p = prompt_embedding<float>({""});

  auto arefs = adaptor.params();
  auto urefs = unet.params();
  nn::Adam<float> adam(cfg.lr);
  TrainReport rep;
  LossMeter meter{"train_adaptor", cfg.log_every, &rep.losses};
  const int M = train.size();

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<int> idx = draw_batch(rng, M, cfg.batch);
    const Tensorf& f = ts.z0[size_t(idx[0])];
    Tensorf zt({cfg.batch, f.dim(0), f.dim(1), f.dim(2)});
    Tensorf eps({cfg.batch, f.dim(0), f.dim(1), f.dim(2)});
    Tensorf pb({cfg.batch, ts.prompts.dim(1)});
    std::vector<int> tb(cfg.batch);
    for (int i = 0; i < cfg.batch; ++i) {
      tb[size_t(i)] = rng.uniform_int(1, sched.steps);
      const bool drop = rng.uniform() < double(cfg.prompt_dropout);
      Tensorf e = Tensorf::randn(f.shape(), rng);
      const float sa = float(std::sqrt(sched.abar(tb[size_t(i)])));
      const float sb = float(std::sqrt(1.0 - sched.abar(tb[size_t(i)])));
      Tensorf zi = ts.z0[size_t(idx[size_t(i)])];
      zi.flat() = sa * zi.flat() + sb * e.flat();
      zt.set_slice(i, zi);
      eps.set_slice(i, e);
      if (drop)
        copy_row(null_p, 0, pb, i);
      else
        copy_row(ts.prompts, idx[size_t(i)], pb, i);
    }
    nn::zero_grads(arefs);
    nn::zero_grads(urefs);  // the frozen base still accumulates; keep it clean
    adaptor.set_condition(cond_batch(ts, train, idx));
    Tensorf ehat = unet.forward(zt, tb, pb, &adaptor, Cache::kFull);
    const float loss = nn::mse(ehat, eps);
    unet.backward(nn::mse_grad(ehat, eps));
    adam.step(arefs);  // only the adaptor moves
    meter.add(step, loss);
  }
  meter.flush();

  if (val.size() > 0) {
    CondSet vs = build_cond_set(vae, codec, val);
    const uint64_t val_seed = mix_seed(cfg.seed, 0x76616c);
    rep.metrics["base_val_loss"] =
        fixed_denoise_loss(unet, sched, vs.z0, vs.prompts, val_seed, nullptr);
    auto bind = [&](int begin, int n) -> UNetHooks<float>* {
      adaptor.set_condition(cond_batch(vs, val, iota_range(begin, n)));
      return &adaptor;
    };
    rep.metrics["val_loss"] =
        fixed_denoise_loss(unet, sched, vs.z0, vs.prompts, val_seed, bind);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// OCR surrogate

namespace {

struct CropPool {
  std::vector<Tensorf> crops;  // {1, S, S}
  std::vector<int> labels;
};

// Character cells straight from the layouts.
void harvest_chars(const Dataset& d, CropPool& pool) {
  CropLayer<float> crop;
  for (int i = 0; i < d.size(); ++i) {
    Tensorf crops = crop.forward(d.images[size_t(i)], d.layouts[size_t(i)]);
    for (int k = 0; k < crops.dim(0); ++k) {
      pool.crops.push_back(crops.slice(k));
      pool.labels.push_back(crop.labels()[size_t(k)]);
    }
  }
}

// Ink-free cells sampled from the same pages, labeled as the blank class.
// The candidate box is checked against the word ink masks with a margin so
// a blank crop never grazes a glyph.
void harvest_blanks(const Dataset& d, int want, uint64_t seed, CropPool& pool) {
  if (d.size() == 0 || want <= 0) return;
  Rng rng(seed);
  std::vector<std::vector<uint8_t>> masks(size_t(d.size()));
  CropLayer<float> crop;
  int made = 0, attempts = 0;
  const int max_attempts = want * 50;
  while (made < want && attempts < max_attempts) {
    ++attempts;
    const int i = rng.uniform_int(0, d.size() - 1);
    const TextLayout& z = d.layouts[size_t(i)];
    const int cw = z.canvas_w, ch = z.canvas_h;
    auto& mask = masks[size_t(i)];
    if (mask.empty()) {
      mask.assign(size_t(cw) * size_t(ch), 0);
      for (const WordRecord& w : z.words) stamp_word(mask, cw, ch, w);
    }
    const int h = rng.uniform_int(10, 20);
    const int gw = glyph_width(h);
    if (gw + 4 >= cw || h + 4 >= ch) continue;
    const int x = rng.uniform_int(2, cw - gw - 2);
    const int y = rng.uniform_int(2, ch - h - 2);
    bool clear = true;
    for (int r = y - 2; r < y + h + 2 && clear; ++r)
      for (int c = x - 2; c < x + gw + 2; ++c)
        if (mask[size_t(r) * size_t(cw) + size_t(c)]) {
          clear = false;
          break;
        }
    if (!clear) continue;
    TextLayout one{cw, ch, {WordRecord{"a", x, y, h}}};
    Tensorf crops = crop.forward(d.images[size_t(i)], one);
    pool.crops.push_back(crops.slice(0));
    pool.labels.push_back(kOcrBlank);
    ++made;
  }
}

double crop_accuracy(CharCnn<float>& model, const CropPool& pool, float sigma,
                     uint64_t seed) {
  if (pool.crops.empty()) return 0.0;
  Rng rng(seed);
  const int M = int(pool.crops.size());
  int hit = 0;
  for (int b = 0; b < M; b += 64) {
    const int n = std::min(64, M - b);
    Tensorf xb({n, 1, kOcrCrop, kOcrCrop});
    for (int i = 0; i < n; ++i) {
      Tensorf c = pool.crops[size_t(b + i)];
      if (sigma > 0)
        for (Eigen::Index j = 0; j < c.size(); ++j)
          c[j] += sigma * float(rng.normal());
      xb.set_slice(i, c);
    }
    Tensorf logits = model.forward(xb, Cache::kNone);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int k = 1; k < kOcrClasses; ++k)
        if (logits(i, k) > logits(i, best)) best = k;
      if (best == pool.labels[size_t(b + i)]) ++hit;
    }
  }
  return double(hit) / M;
}

}  // namespace

TrainReport train_surrogate(CharCnn<float>& model, const Dataset& train,
                            const Dataset& val, const SurrogateTrainConfig& cfg) {
  require_data(train, "train_surrogate");
  CropPool pool;
  harvest_chars(train, pool);
  if (pool.crops.empty()) throw std::runtime_error("train_surrogate: no character crops");
  harvest_blanks(train, int(double(pool.crops.size()) * double(cfg.blank_frac)),
                 mix_seed(cfg.seed, 0x626c6b), pool);

  CropPool vpool;
  harvest_chars(val, vpool);
  harvest_blanks(val, int(double(vpool.crops.size()) * double(cfg.blank_frac)),
                 mix_seed(cfg.seed, 0x76626c6b), vpool);

  Rng rng(cfg.seed);
  auto refs = model.params();
  nn::Adam<float> adam(cfg.lr);
  TrainReport rep;
  LossMeter meter{"train_surrogate", cfg.log_every, &rep.losses};
  const int M = int(pool.crops.size());

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<int> idx = draw_batch(rng, M, cfg.batch);
    Tensorf xb({cfg.batch, 1, kOcrCrop, kOcrCrop});
    std::vector<int> labels(cfg.batch);
    for (int i = 0; i < cfg.batch; ++i) {
      Tensorf c = pool.crops[size_t(idx[size_t(i)])];
      const float sigma = float(rng.uniform(0.0, double(cfg.noise_hi)));
      for (Eigen::Index j = 0; j < c.size(); ++j) c[j] += sigma * float(rng.normal());
      xb.set_slice(i, c);
      labels[size_t(i)] = pool.labels[size_t(idx[size_t(i)])];
    }
    nn::zero_grads(refs);
    Tensorf logits = model.forward(xb, Cache::kFull);
    Tensorf targets = one_hot_targets<float>(labels);
    const float loss = nn::mse(logits, targets);
    model.backward(nn::mse_grad(logits, targets));
    adam.step(refs);
    meter.add(step, loss);
  }
  meter.flush();

  const CropPool& score_pool = vpool.crops.empty() ? pool : vpool;
  const double clean = crop_accuracy(model, score_pool, 0.0f, 0);
  const double noisy =
      crop_accuracy(model, score_pool, 0.05f, mix_seed(cfg.seed, 0x6e6f697379));
  rep.metrics["clean_acc"] = clean;
  rep.metrics["noisy_acc"] = noisy;
  if (clean < 0.95)
    throw std::runtime_error("train_surrogate: held-out accuracy " +
                             std::to_string(clean) + " is below 0.95");
  return rep;
}

}  // namespace picd
