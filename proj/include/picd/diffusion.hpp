#pragma once

// Latent diffusion backbone: noise schedule, a small hook-extensible UNet
// noise predictor, and the image VAE whose latent space it runs in.
//
// The UNet operates on 16x16 latents with two resolutions (16 and 8). It
// exposes three extension points so domain and structural conditioning can
// be layered on without touching the backbone:
//   - a prompt embedding added into the timestep embedding,
//   - spatial modulation hooks at three block sites (SPADE-style),
//   - additive taps at the skip and mid junctions (control-branch style).
// The hooks see forward and backward, so an adaptor can both inject
// features and receive gradients for its own parameters.
//
// Weight layout decisions live here; training loops live in trainer.hpp.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "picd/checkpoint.hpp"
#include "picd/nn.hpp"

namespace picd {

using nn::Cache;

// ---------------------------------------------------------------------------
// Noise schedule

struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta, alpha, alpha_bar;

  DiffusionSchedule() = default;

  // Linear beta ramp over the requested step count.
  explicit DiffusionSchedule(int steps_, double beta_lo = 1e-4, double beta_hi = 0.02)
      : steps(steps_) {
    beta.resize(size_t(steps));
    alpha.resize(size_t(steps));
    alpha_bar.resize(size_t(steps));
    double ab = 1.0;
    for (int t = 0; t < steps; ++t) {
      beta[size_t(t)] = steps == 1 ? beta_lo
                                   : beta_lo + (beta_hi - beta_lo) * double(t) / double(steps - 1);
      alpha[size_t(t)] = 1.0 - beta[size_t(t)];
      ab *= alpha[size_t(t)];
      alpha_bar[size_t(t)] = ab;
    }
  }

  // t is 1-based: t in [1, steps].
  double abar(int t) const { return alpha_bar[size_t(t - 1)]; }
  double abar_prev(int t) const { return t > 1 ? alpha_bar[size_t(t - 2)] : 1.0; }

  // Posterior noise level for the ancestral step at t (zero at t = 1).
  double sigma(int t) const {
    if (t <= 1) return 0.0;
    const double b = beta[size_t(t - 1)];
    return std::sqrt(b * (1.0 - abar_prev(t)) / (1.0 - abar(t)));
  }
};

// Minimum-mean-square-error estimate of the clean latent given the noisy
// latent and the predicted noise at timestep t.
template <typename T>
Tensor<T> posterior_mean(const Tensor<T>& z_t, const Tensor<T>& eps,
                         const DiffusionSchedule& sched, int t) {
  const T ab = T(sched.abar(t));
  const T s1 = T(1) / std::sqrt(ab);
  const T s2 = std::sqrt(T(1) - ab);
  Tensor<T> z0 = z_t;
  z0.flat() = (z_t.flat() - s2 * eps.flat()) * s1;
  return z0;
}

// ---------------------------------------------------------------------------
// Embeddings

// Sinusoidal embedding of integer timesteps, {N, dim}.
template <typename T>
Tensor<T> time_embedding(const std::vector<int>& t, int dim) {
  const int half = dim / 2;
  Tensor<T> e({int(t.size()), dim});
  for (size_t n = 0; n < t.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
      e(int(n), i) = T(std::sin(double(t[n]) * freq));
      e(int(n), half + i) = T(std::cos(double(t[n]) * freq));
    }
  return e;
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr int kPromptDim = 32;

// Hashed bag-of-words prompt embedding; the empty prompt maps to the zero
// vector, which is the null conditioning used for classifier-free guidance.
template <typename T>
Tensor<T> prompt_embedding(const std::vector<std::string>& prompts) {
  Tensor<T> e({int(prompts.size()), kPromptDim});
  for (size_t n = 0; n < prompts.size(); ++n) {
    int count = 0;
    size_t pos = 0;
    const std::string& p = prompts[n];
    while (pos < p.size()) {
      while (pos < p.size() && p[pos] == ' ') ++pos;
      size_t end = pos;
      while (end < p.size() && p[end] != ' ') ++end;
      if (end > pos) {
        const uint64_t h = fnv1a64(p.substr(pos, end - pos));
        e(int(n), int(h % kPromptDim)) += (h >> 32) & 1 ? T(1) : T(-1);
        ++count;
      }
      pos = end;
    }
    if (count > 0)
      for (int i = 0; i < kPromptDim; ++i)
        e(int(n), i) /= T(std::sqrt(double(count)));
  }
  return e;
}

// ---------------------------------------------------------------------------
// UNet

template <typename T>
struct UNetHooks {
  virtual ~UNetHooks() = default;
  virtual void begin(const Tensor<T>& z, const Tensor<T>& temb, Cache mode) {}
  virtual Tensor<T> spade(int site, Tensor<T> h, Cache mode) { return h; }
  virtual Tensor<T> add_skip(Tensor<T> h, Cache mode) { return h; }
  virtual Tensor<T> add_mid(Tensor<T> h, Cache mode) { return h; }
  virtual Tensor<T> spade_backward(int site, Tensor<T> gh) { return gh; }
  virtual Tensor<T> add_skip_backward(Tensor<T> gh) { return gh; }
  virtual Tensor<T> add_mid_backward(Tensor<T> gh) { return gh; }
  virtual Tensor<T> end_backward(Tensor<T> gz) { return gz; }
};

// GN -> (hook) -> SiLU -> conv -> +temb -> GN -> SiLU -> conv, residual.
template <typename T>
struct ResBlock {
  int in_ch = 0, out_ch = 0, spade_site = -1;
  nn::GroupNorm<T> gn1, gn2;
  nn::SiLU<T> act1, act2, act_t;
  nn::Conv2d<T> conv1, conv2, skip;
  nn::Linear<T> temb_proj;
  bool has_skip = false;

  ResBlock() = default;

  ResBlock(int in, int out, int temb_dim, Rng& rng, int groups = 8)
      : in_ch(in), out_ch(out) {
    gn1 = nn::GroupNorm<T>(groups, in);
    gn2 = nn::GroupNorm<T>(groups, out);
    conv1 = nn::Conv2d<T>(in, out, 3, 1, 1, rng);
    conv2 = nn::Conv2d<T>(out, out, 3, 1, 1, rng, T(0.2));
    temb_proj = nn::Linear<T>(temb_dim, out, rng, T(0.2));
    has_skip = in != out;
    if (has_skip) skip = nn::Conv2d<T>(in, out, 1, 1, 0, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& temb,
                    UNetHooks<T>* hooks, Cache mode) {
    mode_ = mode;
    if (mode != Cache::kNone) x_in_ = x;
    Tensor<T> h = gn1.forward(x, mode);
    if (hooks && spade_site >= 0) h = hooks->spade(spade_site, std::move(h), mode);
    h = act1.forward(h, mode);
    h = conv1.forward(h, mode);
    Tensor<T> tp = temb_proj.forward(act_t.forward(temb, mode), mode);
    const int N = h.dim(0), C = h.dim(1), H = h.dim(2), W = h.dim(3);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T v = tp(n, c);
        Eigen::Map<EArray<T>>(h.data() + (Eigen::Index(n) * C + c) * H * W,
                              Eigen::Index(H) * W) += v;
      }
    h = gn2.forward(h, mode);
    h = act2.forward(h, mode);
    h = conv2.forward(h, mode);
    Tensor<T> res = has_skip ? skip.forward(x, mode) : x;
    h.flat() += res.flat();
    hooks_ = hooks;
    return h;
  }

  // Returns gx; accumulates the timestep-embedding gradient into gtemb.
  Tensor<T> backward(const Tensor<T>& gy, Tensor<T>& gtemb) {
    Tensor<T> gh = conv2.backward(gy);
    gh = act2.backward(gh);
    gh = gn2.backward(gh);
    // Gradient of the broadcast temb add: sum over spatial positions.
    const int N = gh.dim(0), C = gh.dim(1), H = gh.dim(2), W = gh.dim(3);
    Tensor<T> gtp({N, C});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        gtp(n, c) = Eigen::Map<const EArray<T>>(
                        gh.data() + (Eigen::Index(n) * C + c) * H * W,
                        Eigen::Index(H) * W)
                        .sum();
    gtemb.flat() += act_t.backward(temb_proj.backward(gtp)).flat();
    gh = conv1.backward(gh);
    gh = act1.backward(gh);
    if (hooks_ && spade_site >= 0) gh = hooks_->spade_backward(spade_site, std::move(gh));
    Tensor<T> gx = gn1.backward(gh);
    if (has_skip) {
      gx.flat() += skip.backward(gy).flat();
    } else {
      gx.flat() += gy.flat();
    }
    return gx;
  }

  void collect(const std::string& p, nn::ParamRefs<T>& out) {
    gn1.collect(p + ".gn1", out);
    gn2.collect(p + ".gn2", out);
    conv1.collect(p + ".conv1", out);
    conv2.collect(p + ".conv2", out);
    temb_proj.collect(p + ".temb", out);
    if (has_skip) skip.collect(p + ".skip", out);
  }

  void set_train_base(bool on) {
    conv1.train_base = on;
    conv2.train_base = on;
    if (has_skip) skip.train_base = on;
    temb_proj.trainable = on;
    gn1.trainable = on;
    gn2.trainable = on;
  }

 private:
  Cache mode_ = Cache::kNone;
  Tensor<T> x_in_;
  UNetHooks<T>* hooks_ = nullptr;
};

struct UNetConfig {
  int z_ch = 4;
  int ch = 40;
  int temb_dim = 64;
  int groups = 8;

  bool operator==(const UNetConfig&) const = default;
};

// Two-resolution UNet over {N, z_ch, 16, 16} latents.
//
// conv_in -> d1a -> d1b -> down -> m1 -> m2 -> up -> cat(d1b) -> u1a
//   -> u1b -> out. Hook sites: spade 0 at d1a, 1 at m1, 2 at u1a; the
// control taps land on the skip tensor and after m2.
template <typename T>
struct UNet {
  UNetConfig cfg;
  // Schedule length the model was trained against; 0 until a trainer sets
  // it. Stored in the checkpoint so a decode can reconstruct the schedule.
  int sched_steps = 0;
  nn::Linear<T> temb_fc1, temb_fc2, prompt_fc;
  nn::SiLU<T> temb_act;
  nn::Conv2d<T> conv_in, down, up_conv, conv_out;
  nn::UpsampleNearest2<T> up;
  ResBlock<T> d1a, d1b, m1, m2, u1a, u1b;
  nn::GroupNorm<T> gn_out;
  nn::SiLU<T> act_out;

  UNet() = default;

  UNet(const UNetConfig& c, Rng& rng) : cfg(c) {
    const int ch = c.ch, temb = c.temb_dim;
    temb_fc1 = nn::Linear<T>(32, temb, rng);
    temb_fc2 = nn::Linear<T>(temb, temb, rng);
    prompt_fc = nn::Linear<T>(kPromptDim, temb, rng, T(0.5));
    conv_in = nn::Conv2d<T>(c.z_ch, ch, 3, 1, 1, rng);
    d1a = ResBlock<T>(ch, ch, temb, rng, c.groups);
    d1b = ResBlock<T>(ch, ch, temb, rng, c.groups);
    down = nn::Conv2d<T>(ch, 2 * ch, 3, 2, 1, rng);
    m1 = ResBlock<T>(2 * ch, 2 * ch, temb, rng, c.groups);
    m2 = ResBlock<T>(2 * ch, 2 * ch, temb, rng, c.groups);
    up_conv = nn::Conv2d<T>(2 * ch, ch, 3, 1, 1, rng);
    u1a = ResBlock<T>(2 * ch, ch, temb, rng, c.groups);
    u1b = ResBlock<T>(ch, ch, temb, rng, c.groups);
    gn_out = nn::GroupNorm<T>(c.groups, ch);
    conv_out = nn::Conv2d<T>(ch, c.z_ch, 3, 1, 1, rng, T(0.2));
    d1a.spade_site = 0;
    m1.spade_site = 1;
    u1a.spade_site = 2;
  }

  // t entries are 1-based timesteps; prompt is {N, kPromptDim}.
  Tensor<T> forward(const Tensor<T>& z, const std::vector<int>& t,
                    const Tensor<T>& prompt, UNetHooks<T>* hooks, Cache mode) {
    mode_ = mode;
    hooks_ = hooks;
    Tensor<T> te = time_embedding<T>(t, 32);
    Tensor<T> e1 = temb_fc1.forward(te, mode);
    Tensor<T> ep = prompt_fc.forward(prompt, mode);
    e1.flat() += ep.flat();
    Tensor<T> temb = temb_fc2.forward(temb_act.forward(e1, mode), mode);
    if (hooks) hooks->begin(z, temb, mode);

    Tensor<T> h = conv_in.forward(z, mode);
    h = d1a.forward(h, temb, hooks, mode);
    Tensor<T> hskip = d1b.forward(h, temb, hooks, mode);
    if (hooks) hskip = hooks->add_skip(std::move(hskip), mode);
    h = down.forward(hskip, mode);
    h = m1.forward(h, temb, hooks, mode);
    h = m2.forward(h, temb, hooks, mode);
    if (hooks) h = hooks->add_mid(std::move(h), mode);
    h = up_conv.forward(up.forward(h), mode);
    h = nn::concat_channels(h, hskip);
    h = u1a.forward(h, temb, hooks, mode);
    h = u1b.forward(h, temb, hooks, mode);
    h = gn_out.forward(h, mode);
    h = act_out.forward(h, mode);
    return conv_out.forward(h, mode);
  }

  Tensor<T> backward(const Tensor<T>& geps) {
    Tensor<T> gtemb({geps.dim(0), cfg.temb_dim});
    Tensor<T> gh = conv_out.backward(geps);
    gh = act_out.backward(gh);
    gh = gn_out.backward(gh);
    gh = u1b.backward(gh, gtemb);
    gh = u1a.backward(gh, gtemb);
    Tensor<T> gup, gskip_cat;
    nn::split_channels(gh, gup, gskip_cat, cfg.ch);
    Tensor<T> gm = up.backward(up_conv.backward(gup));
    if (hooks_) gm = hooks_->add_mid_backward(std::move(gm));
    gm = m2.backward(gm, gtemb);
    gm = m1.backward(gm, gtemb);
    Tensor<T> gskip = down.backward(gm);
    gskip.flat() += gskip_cat.flat();
    if (hooks_) gskip = hooks_->add_skip_backward(std::move(gskip));
    gh = d1b.backward(gskip, gtemb);
    gh = d1a.backward(gh, gtemb);
    Tensor<T> gz = conv_in.backward(gh);
    if (hooks_) gz = hooks_->end_backward(std::move(gz));

    // Embedding path; prompt gradients are discarded (the embedding is a
    // fixed hash, not a trainable table).
    Tensor<T> ge1 = temb_act.backward(temb_fc2.backward(gtemb));
    prompt_fc.backward(ge1);
    temb_fc1.backward(ge1);
    return gz;
  }

  void collect(const std::string& p, nn::ParamRefs<T>& out) {
    temb_fc1.collect(p + ".temb_fc1", out);
    temb_fc2.collect(p + ".temb_fc2", out);
    prompt_fc.collect(p + ".prompt_fc", out);
    conv_in.collect(p + ".conv_in", out);
    d1a.collect(p + ".d1a", out);
    d1b.collect(p + ".d1b", out);
    down.collect(p + ".down", out);
    m1.collect(p + ".m1", out);
    m2.collect(p + ".m2", out);
    up_conv.collect(p + ".up_conv", out);
    u1a.collect(p + ".u1a", out);
    u1b.collect(p + ".u1b", out);
    gn_out.collect(p + ".gn_out", out);
    conv_out.collect(p + ".conv_out", out);
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> refs;
    collect("unet", refs);
    return refs;
  }

  // Low-rank adapters on the first conv of every ResBlock; base weights
  // stay frozen for the fine-tune by construction (the adapters are the
  // only refs marked trainable once set_train_base(false) is applied).
  // One adapter per block keeps the added parameter count at rank 4 to
  // about 3% of the backbone while still touching every resolution.
  void add_lora(int rank, T scale, Rng& rng) {
    for (ResBlock<T>* rb : {&d1a, &d1b, &m1, &m2, &u1a, &u1b})
      rb->conv1.add_lora(rank, scale, rng);
  }

  void merge_lora() {
    for (ResBlock<T>* rb : {&d1a, &d1b, &m1, &m2, &u1a, &u1b})
      rb->conv1.merge_lora();
  }

  void set_train_base(bool on) {
    temb_fc1.trainable = on;
    temb_fc2.trainable = on;
    prompt_fc.trainable = on;
    conv_in.train_base = on;
    down.train_base = on;
    up_conv.train_base = on;
    conv_out.train_base = on;
    gn_out.trainable = on;
    for (ResBlock<T>* rb : {&d1a, &d1b, &m1, &m2, &u1a, &u1b}) rb->set_train_base(on);
  }

  void save(const std::string& path) {
    Checkpoint c;
    c.scalars["z_ch"] = cfg.z_ch;
    c.scalars["ch"] = cfg.ch;
    c.scalars["temb_dim"] = cfg.temb_dim;
    c.scalars["sched_steps"] = sched_steps;
    // Adapters, when present, travel inside the same file; rank and scale
    // let a fresh model grow matching slots before the weights load.
    c.scalars["lora_rank"] = d1a.conv1.lora_active ? double(d1a.conv1.lora_A.rows()) : 0.0;
    c.scalars["lora_scale"] = d1a.conv1.lora_active ? double(d1a.conv1.lora_scale) : 0.0;
    c.strings["model"] = "unet";
    auto refs = params();
    c.put_params(refs);
    c.save(path);
  }

  void load(const std::string& path) {
    Checkpoint c = Checkpoint::load(path);
    if (c.str("model") != "unet")
      throw std::runtime_error("unet: " + path + " holds a different model");
    c.expect("z_ch", cfg.z_ch);
    c.expect("ch", cfg.ch);
    c.expect("temb_dim", cfg.temb_dim);
    sched_steps = int(c.scalar("sched_steps"));
    const int rank = int(c.scalar("lora_rank"));
    if (rank > 0 && !d1a.conv1.lora_active) {
      Rng tmp(0);  // the loaded weights overwrite the init draws
      add_lora(rank, T(c.scalar("lora_scale")), tmp);
    }
    auto refs = params();
    c.get_params(refs);
  }

 private:
  Cache mode_ = Cache::kNone;
  UNetHooks<T>* hooks_ = nullptr;
};

// ---------------------------------------------------------------------------
// VAE

struct VaeConfig {
  int ch = 16;
  int z_ch = 4;

  bool operator==(const VaeConfig&) const = default;
};

// 64x64x3 <-> 16x16xz_ch autoencoder with a diagonal Gaussian posterior.
template <typename T>
struct Vae {
  VaeConfig cfg;
  nn::Conv2d<T> e1, e2, e3, e4, e5, e_out;
  nn::Conv2d<T> d1, d2, d3, d4, d5, d_out;
  nn::SiLU<T> ea1, ea2, ea3, ea4, ea5, da1, da2, da3, da4, da5;
  nn::UpsampleNearest2<T> up1, up2;
  EVector<T> latent_mu, latent_sigma;  // normalization of the diffusion space

  Vae() = default;

  Vae(const VaeConfig& c, Rng& rng) : cfg(c) {
    const int ch = c.ch;
    e1 = nn::Conv2d<T>(3, ch, 3, 1, 1, rng);
    e2 = nn::Conv2d<T>(ch, 2 * ch, 3, 2, 1, rng);
    e3 = nn::Conv2d<T>(2 * ch, 2 * ch, 3, 1, 1, rng);
    e4 = nn::Conv2d<T>(2 * ch, 4 * ch, 3, 2, 1, rng);
    e5 = nn::Conv2d<T>(4 * ch, 4 * ch, 3, 1, 1, rng);
    e_out = nn::Conv2d<T>(4 * ch, 2 * c.z_ch, 1, 1, 0, rng, T(0.5));
    d1 = nn::Conv2d<T>(c.z_ch, 4 * ch, 3, 1, 1, rng);
    d2 = nn::Conv2d<T>(4 * ch, 4 * ch, 3, 1, 1, rng);
    d3 = nn::Conv2d<T>(4 * ch, 2 * ch, 3, 1, 1, rng);
    d4 = nn::Conv2d<T>(2 * ch, 2 * ch, 3, 1, 1, rng);
    d5 = nn::Conv2d<T>(2 * ch, ch, 3, 1, 1, rng);
    d_out = nn::Conv2d<T>(ch, 3, 3, 1, 1, rng, T(0.5));
    latent_mu = EVector<T>::Zero(c.z_ch);
    latent_sigma = EVector<T>::Ones(c.z_ch);
  }

  // Returns {N, 2*z_ch, h, w}: mean channels then logvar channels.
  Tensor<T> encode(const Tensor<T>& x, Cache mode) {
    Tensor<T> h = ea1.forward(e1.forward(x, mode), mode);
    h = ea2.forward(e2.forward(h, mode), mode);
    h = ea3.forward(e3.forward(h, mode), mode);
    h = ea4.forward(e4.forward(h, mode), mode);
    h = ea5.forward(e5.forward(h, mode), mode);
    return e_out.forward(h, mode);
  }

  Tensor<T> encode_backward(const Tensor<T>& gy) {
    Tensor<T> g = e_out.backward(gy);
    g = e5.backward(ea5.backward(g));
    g = e4.backward(ea4.backward(g));
    g = e3.backward(ea3.backward(g));
    g = e2.backward(ea2.backward(g));
    return e1.backward(ea1.backward(g));
  }

  static Tensor<T> posterior_mean_of(const Tensor<T>& enc) {
    const int N = enc.dim(0), C = enc.dim(1) / 2, H = enc.dim(2), W = enc.dim(3);
    Tensor<T> mu({N, C, H, W});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) mu(n, c, h, w) = enc(n, c, h, w);
    return mu;
  }

  Tensor<T> encode_mean(const Tensor<T>& x, Cache mode = Cache::kNone) {
    return posterior_mean_of(encode(x, mode));
  }

  Tensor<T> decode(const Tensor<T>& z, Cache mode) {
    Tensor<T> h = da1.forward(d1.forward(z, mode), mode);
    h = da2.forward(d2.forward(h, mode), mode);
    h = da3.forward(d3.forward(up1.forward(h), mode), mode);
    h = da4.forward(d4.forward(h, mode), mode);
    h = da5.forward(d5.forward(up2.forward(h), mode), mode);
    return d_out.forward(h, mode);
  }

  Tensor<T> decode_backward(const Tensor<T>& gy) {
    Tensor<T> g = d_out.backward(gy);
    g = up2.backward(d5.backward(da5.backward(g)));
    g = d4.backward(da4.backward(g));
    g = up1.backward(d3.backward(da3.backward(g)));
    g = d2.backward(da2.backward(g));
    return d1.backward(da1.backward(g));
  }

  // Diffusion operates in the normalized space (raw - mu) / sigma.
  Tensor<T> normalize(Tensor<T> z) const {
    apply_channelwise(z, [&](int c, T v) { return (v - latent_mu[c]) / latent_sigma[c]; });
    return z;
  }

  Tensor<T> denormalize(Tensor<T> z) const {
    apply_channelwise(z, [&](int c, T v) { return v * latent_sigma[c] + latent_mu[c]; });
    return z;
  }

  void collect(const std::string& p, nn::ParamRefs<T>& out) {
    e1.collect(p + ".e1", out);
    e2.collect(p + ".e2", out);
    e3.collect(p + ".e3", out);
    e4.collect(p + ".e4", out);
    e5.collect(p + ".e5", out);
    e_out.collect(p + ".e_out", out);
    d1.collect(p + ".d1", out);
    d2.collect(p + ".d2", out);
    d3.collect(p + ".d3", out);
    d4.collect(p + ".d4", out);
    d5.collect(p + ".d5", out);
    d_out.collect(p + ".d_out", out);
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> refs;
    collect("vae", refs);
    return refs;
  }

  void save(const std::string& path) {
    Checkpoint c;
    c.strings["model"] = "vae";
    c.scalars["ch"] = cfg.ch;
    c.scalars["z_ch"] = cfg.z_ch;
    auto refs = params();
    c.put_params(refs);
    c.tensors["vae.latent_mu"] = to_floats(latent_mu);
    c.tensors["vae.latent_sigma"] = to_floats(latent_sigma);
    c.save(path);
  }

  void load(const std::string& path) {
    Checkpoint c = Checkpoint::load(path);
    if (c.str("model") != "vae")
      throw std::runtime_error("vae: " + path + " holds a different model");
    c.expect("ch", cfg.ch);
    c.expect("z_ch", cfg.z_ch);
    auto refs = params();
    c.get_params(refs);
    from_floats(c.tensors.at("vae.latent_mu"), latent_mu);
    from_floats(c.tensors.at("vae.latent_sigma"), latent_sigma);
  }

 private:
  template <typename F>
  static void apply_channelwise_impl(Tensor<T>& z, F&& f, int N, int C, int H, int W) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const Eigen::Index off = (Eigen::Index(n) * C + c) * H * W;
        for (Eigen::Index i = 0; i < Eigen::Index(H) * W; ++i)
          z[off + i] = f(c, z[off + i]);
      }
  }

  template <typename F>
  void apply_channelwise(Tensor<T>& z, F&& f) const {
    if (z.rank() == 4)
      apply_channelwise_impl(z, f, z.dim(0), z.dim(1), z.dim(2), z.dim(3));
    else
      apply_channelwise_impl(z, f, 1, z.dim(0), z.dim(1), z.dim(2));
  }

  static std::vector<float> to_floats(const EVector<T>& v) {
    std::vector<float> out(size_t(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[size_t(i)] = float(v[i]);
    return out;
  }

  static void from_floats(const std::vector<float>& in, EVector<T>& v) {
    if (Eigen::Index(in.size()) != v.size())
      throw std::runtime_error("vae: latent statistics size mismatch");
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = T(in[size_t(i)]);
  }
};

}  // namespace picd
