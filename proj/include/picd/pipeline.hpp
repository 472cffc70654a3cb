// End-to-end coding pipeline.
//
// encode: extract the text, code it losslessly, code the image with the
// rendered glyph map as a condition, and wrap both sections in a container.
// decode: recover the text exactly, rebuild the glyph map, decode the codec
// reconstruction, then render the final image by guided diffusion sampling
// conditioned on all three.
//
// A Pipeline owns one frozen model bundle, loaded once from the checkpoint
// paths in its config. Decodes are deterministic per (container, seed,
// config). Natural mode runs the same machinery with an empty text path:
// no glyph condition, a stub caption prompt, and the OCR guidance weight
// forced to zero; the surrogate recognizer is never even loaded.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "picd/adaptor.hpp"
#include "picd/codec.hpp"
#include "picd/corpus.hpp"
#include "picd/diffusion.hpp"
#include "picd/metrics.hpp"
#include "picd/ocr_net.hpp"
#include "picd/sampler.hpp"
#include "picd/text.hpp"

namespace picd {

struct PipelineConfig {
  CodecMode mode = CodecMode::kScreen;

  // Checkpoint paths. lora_path, when set, is loaded as the score model
  // (a fine-tuned checkpoint embeds its base weights and adapter slots).
  // adaptor_path may be empty to decode with the bare score model.
  std::string codec_path, vae_path, score_path, lora_path;
  std::string adaptor_path, surrogate_path;
  AdaptorKind adaptor_kind = AdaptorKind::kHybrid;

  GuidanceConfig guidance;  // per-mode defaults; see from_json
  std::string natural_prompt = "an image";
  uint64_t seed = 1;

  // Mode and flag rules applied at decode time: natural mode has no OCR
  // term, and the fast path drops both guidance terms.
  GuidanceConfig effective_guidance(bool fast) const {
    GuidanceConfig g = guidance;
    if (mode == CodecMode::kNatural) g.zeta1 = 0.0f;
    if (fast) {
      g.zeta1 = 0.0f;
      g.zeta2 = 0.0f;
    }
    return g;
  }

  // Parses the JSON document; keys absent from the document keep the
  // mode's defaults (screen: T=250, zeta1=0.25, zeta2=1e-4, omega=0;
  // natural: T=500, zeta2=0, omega=3).
  static PipelineConfig from_json(const std::string& text);
  // Reads the file and resolves relative model paths against its directory.
  static PipelineConfig from_json_file(const std::string& path);

  void validate() const;
};

struct EncodeResult {
  PicdContainer container;
  std::vector<uint8_t> bytes;  // serialized container
  TextLayout layout;           // text section content (empty in natural mode)
  double bpp = 0;              // 8 * bytes / pixels
  double text_bpp = 0;
  double image_bpp = 0;
  bool ocr_empty = false;  // warning: the extractor found no words
  int ocr_dropped = 0;     // ink regions the extractor could not parse
};

struct DecodeResult {
  Tensorf image;       // rendered output {3,H,W}, clamped to [0,1]
  Tensorf xbar;        // codec reconstruction, clamped, for inspection
  TextLayout layout;   // decoded text section
  SampleStats stats;
  bool used_ocr_guidance = false;
  bool used_recompression = false;
  double sample_seconds = 0;  // wall clock of the sampling loop
};

class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg);

  EncodeResult encode(const Tensorf& image);
  DecodeResult decode(const PicdContainer& c, uint64_t seed, bool fast = false);
  DecodeResult decode(const std::vector<uint8_t>& bytes, uint64_t seed,
                      bool fast = false);

  const PipelineConfig& config() const { return cfg_; }

  CodecModel<float>& codec() { return codec_; }
  Vae<float>& vae() { return vae_; }
  UNet<float>& score() { return score_; }
  AdaptorModel<float>& adaptor() { return adaptor_; }
  CharCnn<float>& surrogate() { return surrogate_; }
  bool has_adaptor() const { return has_adaptor_; }
  bool surrogate_loaded() const { return has_surrogate_; }

 private:
  PipelineConfig cfg_;
  CodecModel<float> codec_;
  Vae<float> vae_;
  UNet<float> score_;
  AdaptorModel<float> adaptor_;
  CharCnn<float> surrogate_;
  bool has_adaptor_ = false;
  bool has_surrogate_ = false;
};

// ---------------------------------------------------------------------------
// Sweep runner

// One evaluation request: a labeled pipeline config at one rate point.
// decode_render=false scores the codec reconstruction directly (the
// codec-only baseline row); true runs the full diffusion rendering.
struct SweepItem {
  std::string method;
  double lambda = 1.0;
  PipelineConfig config;
  bool decode_render = true;
};

struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::vector<std::string> skipped;  // items dropped with the reason
};

// Evaluates every item on corpus samples [begin, end): per-sample encode,
// decode with seed mix_seed(seed, index), then mean bpp / PSNR / word
// Jaccard against the sample's layout. Items whose models fail to load are
// skipped with a report entry instead of aborting the sweep.
SweepOutcome run_sweep(const CorpusManifest& corpus, int begin, int end,
                       const std::vector<SweepItem>& items, uint64_t seed);

// Writes "<prefix>_psnr.png" and "<prefix>_jaccard.png" from sweep rows,
// one series per method, points ordered by bpp. Byte-identical for
// identical rows.
void write_rd_plots(const std::vector<SweepRow>& rows, const std::string& prefix);

}  // namespace picd
