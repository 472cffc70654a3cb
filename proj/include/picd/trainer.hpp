// Training loops for every learned component.
//
// Each trainer is a plain function over models the caller owns: load a
// Dataset, construct the model, call the trainer, save the result. All
// loops draw randomness from one seeded generator, so a (seed, config,
// dataset) triple reproduces the identical parameter trajectory. Trainers
// abort with an exception when the loss turns non-finite; they never
// silently continue past divergence.
//
// Reports carry the interval-averaged loss curve plus a few named summary
// metrics (validation PSNR, accuracy, baseline losses) that the callers
// and the end-to-end checks assert against.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "picd/adaptor.hpp"
#include "picd/codec.hpp"
#include "picd/corpus.hpp"
#include "picd/diffusion.hpp"
#include "picd/ocr_net.hpp"
#include "picd/text.hpp"

namespace picd {

// In-memory split of the corpus: images with layouts and rendered glyphs.
struct Dataset {
  std::vector<Tensorf> images;      // {3,64,64}
  std::vector<TextLayout> layouts;
  std::vector<Tensorf> glyphs;      // {1,64,64}

  int size() const { return int(images.size()); }
};

// Loads manifest samples [begin, end), rendering glyph maps as it goes.
Dataset load_dataset(const CorpusManifest& m, int begin, int end);

// Prompt string attached to screen samples for score training and decode.
std::string screen_prompt(const TextLayout& z);

struct TrainReport {
  std::vector<double> losses;  // mean training loss per log interval
  std::map<std::string, double> metrics;

  double first_loss() const { return losses.empty() ? 0.0 : losses.front(); }
  double last_loss() const { return losses.empty() ? 0.0 : losses.back(); }
};

// ---------------------------------------------------------------------------

struct VaeTrainConfig {
  uint64_t seed = 1;
  int steps = 3000;
  int batch = 8;
  float lr = 1e-3f;
  float kl_weight = 1e-4f;
  int log_every = 100;
};

// Reconstruction + KL objective with reparameterized posterior samples.
// After the loop the per-channel latent statistics (mu, sigma) of the
// training set are measured and stored on the model; the diffusion stack
// runs in that normalized space. metrics: val_psnr.
TrainReport train_vae(Vae<float>& vae, const Dataset& train, const Dataset& val,
                      const VaeTrainConfig& cfg);

// ---------------------------------------------------------------------------

struct ScoreTrainConfig {
  uint64_t seed = 1;
  int steps = 4000;
  int batch = 8;
  float lr = 3e-4f;
  int sched_steps = 250;      // schedule length T
  float prompt_dropout = 0.1f;  // fraction replaced by the null prompt
  int log_every = 100;
};

// Noise-prediction objective on VAE latents. Sets unet.sched_steps.
// metrics: val_loss.
TrainReport train_score(UNet<float>& unet, Vae<float>& vae, const Dataset& train,
                        const Dataset& val, const ScoreTrainConfig& cfg);

// ---------------------------------------------------------------------------

struct LoraTrainConfig {
  uint64_t seed = 1;
  int steps = 1500;
  int batch = 8;
  float lr = 1e-3f;
  int rank = 4;
  float scale = 1.0f;
  float prompt_dropout = 0.1f;
  int log_every = 100;
};

// Domain fine-tune: adds low-rank adapters, freezes the base, and trains
// only the adapters on the shifted-domain dataset with the same objective
// as train_score. metrics: base_val_loss (frozen base on the shifted
// domain, measured before training), val_loss (after).
TrainReport finetune_lora(UNet<float>& unet, Vae<float>& vae, const Dataset& train,
                          const Dataset& val, const LoraTrainConfig& cfg);

// ---------------------------------------------------------------------------

struct CodecTrainConfig {
  uint64_t seed = 1;
  int stage1_steps = 3000;  // unconditional pretrain
  int stage2_steps = 1500;  // glyph branch + fusion taps, base frozen
  int batch = 8;
  float lr = 1e-3f;
  float lambda = 1.0f;      // distortion weight in rate + lambda * distortion
  bool edge_proxy = false;  // add 0.1 * gradient-map distortion (natural mode)
  int log_every = 100;
};

// Two-stage rate-distortion training with the additive-uniform-noise
// quantization surrogate. Stage 2 freezes the unconditional transforms and
// the entropy model, training only the glyph branch and the fusion taps.
// metrics: stage1_val_psnr, stage2_val_psnr, val_bpp (model estimate).
TrainReport train_codec(CodecModel<float>& codec, const Dataset& train,
                        const Dataset& val, const CodecTrainConfig& cfg);

// ---------------------------------------------------------------------------

struct AdaptorTrainConfig {
  uint64_t seed = 1;
  int steps = 2500;
  int batch = 4;
  float lr = 1e-3f;
  float prompt_dropout = 0.1f;
  int log_every = 100;
};

// Conditional denoising objective; only the adaptor's parameters step, the
// score model and VAE stay frozen. Conditioning pairs (codec round trip,
// glyph map, VAE encodings) are built from the dataset up front. The
// schedule length comes from unet.sched_steps. metrics: val_loss (with
// adaptor), base_val_loss (bare score model, same noise draws).
TrainReport train_adaptor(AdaptorModel<float>& adaptor, UNet<float>& unet,
                          Vae<float>& vae, CodecModel<float>& codec,
                          const Dataset& train, const Dataset& val,
                          const AdaptorTrainConfig& cfg);

// ---------------------------------------------------------------------------

struct SurrogateTrainConfig {
  uint64_t seed = 1;
  int steps = 4000;
  int batch = 32;
  float lr = 1e-3f;
  float noise_hi = 0.08f;    // training crops get N(0, sigma^2), sigma ~ U(0, hi)
  float blank_frac = 0.1f;   // extra no-character crops relative to char crops
  int log_every = 200;
};

// Character classifier on layout-harvested crops, with Gaussian noise
// augmentation and a slice of blank (no ink) crops labeled as the blank
// class. Throws if held-out clean accuracy ends below 0.95. metrics:
// clean_acc, noisy_acc (sigma = 0.05).
TrainReport train_surrogate(CharCnn<float>& model, const Dataset& train,
                            const Dataset& val, const SurrogateTrainConfig& cfg);

}  // namespace picd
