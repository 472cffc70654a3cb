#include "picd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "picd/glyph.hpp"
#include "picd/ocr.hpp"
#include "picd/plot.hpp"
#include "picd/trainer.hpp"

namespace picd {

namespace {

using nlohmann::json;

const char* mode_name(CodecMode m) {
  return m == CodecMode::kScreen ? "screen" : "natural";
}

GuidanceConfig mode_defaults(CodecMode mode) {
  GuidanceConfig g;
  if (mode == CodecMode::kScreen) {
    g.steps = 250;
    g.zeta1 = 0.25f;
    g.zeta2 = 1e-4f;
    g.omega = 0.0f;
  } else {
    g.steps = 500;
    g.zeta1 = 0.0f;
    g.zeta2 = 0.0f;
    g.omega = 3.0f;
  }
  return g;
}

// Checkpoints are self-describing: read the stored shape scalars, build a
// model of that shape, then load the weights through its own loader (which
// re-validates everything).

CodecModel<float> load_codec(const std::string& path) {
  Checkpoint c = Checkpoint::load(path);
  Rng rng(0);
  CodecModel<float> m(CodecConfig{int(c.scalar("ch")), int(c.scalar("z_ch"))}, rng);
  m.load(path);
  return m;
}

Vae<float> load_vae(const std::string& path) {
  Checkpoint c = Checkpoint::load(path);
  Rng rng(0);
  Vae<float> m(VaeConfig{int(c.scalar("ch")), int(c.scalar("z_ch"))}, rng);
  m.load(path);
  return m;
}

UNet<float> load_unet(const std::string& path) {
  Checkpoint c = Checkpoint::load(path);
  Rng rng(0);
  UNetConfig uc;
  uc.z_ch = int(c.scalar("z_ch"));
  uc.ch = int(c.scalar("ch"));
  uc.temb_dim = int(c.scalar("temb_dim"));
  UNet<float> m(uc, rng);
  m.load(path);
  return m;
}

AdaptorModel<float> load_adaptor(const std::string& path, const UNet<float>* base) {
  Checkpoint c = Checkpoint::load(path);
  AdaptorConfig<float> ac;
  ac.kind = adaptor_kind_from(c.str("kind"));
  ac.unet_ch = int(c.scalar("unet_ch"));
  ac.vae_z = int(c.scalar("vae_z"));
  ac.spade_hidden = int(c.scalar("spade_hidden"));
  ac.enc_ch = int(c.scalar("enc_ch"));
  Rng rng(0);
  AdaptorModel<float> m(ac, base, rng);
  m.load(path);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  const std::string mode = j.value("mode", "screen");
  if (mode == "screen")
    c.mode = CodecMode::kScreen;
  else if (mode == "natural")
    c.mode = CodecMode::kNatural;
  else
    throw std::runtime_error("config: unknown mode '" + mode + "'");
  c.guidance = mode_defaults(c.mode);
  if (j.contains("guidance")) {
    const json& g = j.at("guidance");
    c.guidance.steps = g.value("steps", c.guidance.steps);
    c.guidance.zeta1 = g.value("zeta1", c.guidance.zeta1);
    c.guidance.zeta2 = g.value("zeta2", c.guidance.zeta2);
    c.guidance.omega = g.value("omega", c.guidance.omega);
  }
  if (j.contains("models")) {
    const json& m = j.at("models");
    c.codec_path = m.value("codec", "");
    c.vae_path = m.value("vae", "");
    c.score_path = m.value("score", "");
    c.lora_path = m.value("lora", "");
    c.adaptor_path = m.value("adaptor", "");
    c.surrogate_path = m.value("surrogate", "");
  }
  c.adaptor_kind = adaptor_kind_from(j.value("adaptor_kind", std::string("hybrid")));
  c.natural_prompt = j.value("natural_prompt", c.natural_prompt);
  c.seed = j.value("seed", uint64_t(1));
  return c;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  PipelineConfig c = from_json(ss.str());
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  auto resolve = [&dir](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (dir / p).string();
  };
  resolve(c.codec_path);
  resolve(c.vae_path);
  resolve(c.score_path);
  resolve(c.lora_path);
  resolve(c.adaptor_path);
  resolve(c.surrogate_path);
  return c;
}

void PipelineConfig::validate() const {
  guidance.validate();
  if (codec_path.empty() || vae_path.empty())
    throw std::runtime_error("config: codec and vae model paths are required");
  if (score_path.empty() && lora_path.empty())
    throw std::runtime_error("config: a score model path is required");
  if (mode == CodecMode::kScreen && surrogate_path.empty())
    throw std::runtime_error("config: screen mode requires a surrogate model path");
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(const PipelineConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  codec_ = load_codec(cfg_.codec_path);
  vae_ = load_vae(cfg_.vae_path);
  score_ = load_unet(cfg_.lora_path.empty() ? cfg_.score_path : cfg_.lora_path);
  if (!cfg_.adaptor_path.empty()) {
    adaptor_ = load_adaptor(cfg_.adaptor_path, &score_);
    if (adaptor_.cfg.kind != cfg_.adaptor_kind)
      throw std::runtime_error(std::string("pipeline: adaptor checkpoint holds kind ") +
                               adaptor_kind_name(adaptor_.cfg.kind) +
                               " but the config says " +
                               adaptor_kind_name(cfg_.adaptor_kind));
    has_adaptor_ = true;
  }
  // The surrogate exists only on the screen path; natural mode never loads
  // it, so OCR machinery cannot run there even by accident.
  if (cfg_.mode == CodecMode::kScreen) {
    Rng rng(0);
    surrogate_ = CharCnn<float>(rng);
    surrogate_.load(cfg_.surrogate_path);
    has_surrogate_ = true;
  }
}

EncodeResult Pipeline::encode(const Tensorf& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("encode: image must be {3,H,W}");
  const int H = image.dim(1), W = image.dim(2);
  EncodeResult r;
  Tensorf glyph;
  if (cfg_.mode == CodecMode::kScreen) {
    ExtractResult er = extract(image);
    r.layout = er.layout;
    r.ocr_dropped = er.dropped;
    // Zero words is not fatal: coding proceeds with an empty layout and an
    // all-background glyph map, and the caller sees the warning flag.
    r.ocr_empty = r.layout.words.empty();
    glyph = render_glyph(r.layout);
    r.container.text_section = encode_text_section(r.layout);
  } else {
    r.layout = TextLayout{W, H, {}};
  }
  r.container.version = 1;
  r.container.mode = cfg_.mode;
  r.container.canvas_w = W;
  r.container.canvas_h = H;
  r.container.image_section = codec_.encode_image(image, glyph);
  r.bytes = serialize_container(r.container);
  r.bpp = container_bpp(r.container);
  const double px = double(W) * double(H);
  r.text_bpp = 8.0 * double(r.container.text_section.size()) / px;
  r.image_bpp = 8.0 * double(r.container.image_section.size()) / px;
  return r;
}

DecodeResult Pipeline::decode(const PicdContainer& c, uint64_t seed, bool fast) {
  if (c.mode != cfg_.mode)
    throw std::runtime_error(std::string("decode: container mode is ") +
                             mode_name(c.mode) + " but the pipeline is configured for " +
                             mode_name(cfg_.mode));
  const int H = c.canvas_h, W = c.canvas_w;
  if (H % 4 != 0 || W % 4 != 0)
    throw std::runtime_error("decode: canvas size must be divisible by 4");

  DecodeResult r;
  Tensorf glyph;  // stays empty in natural mode
  if (cfg_.mode == CodecMode::kScreen) {
    r.layout = decode_text_section(c.text_section, W, H);
    glyph = render_glyph(r.layout);
  } else {
    r.layout = TextLayout{W, H, {}};
  }
  Tensorf xbar = codec_.decode_image(c.image_section, glyph);

  GuidanceConfig gc = cfg_.effective_guidance(fast);
  if (score_.sched_steps > 0 && score_.sched_steps != gc.steps)
    throw std::runtime_error("decode: config wants " + std::to_string(gc.steps) +
                             " steps but the score model was trained for " +
                             std::to_string(score_.sched_steps));

  Sampler<float> sampler(score_, vae_, gc);
  sampler.set_prompt(cfg_.mode == CodecMode::kScreen ? screen_prompt(r.layout)
                                                     : cfg_.natural_prompt);
  if (has_adaptor_) {
    CondInputs<float> cond;
    cond.xbar = Tensorf({1, 3, H, W});
    cond.xbar.set_slice(0, xbar);
    cond.glyph = Tensorf({1, 1, H, W});
    if (!glyph.empty()) cond.glyph.set_slice(0, glyph);
    cond.vae_xbar = vae_.normalize(vae_.encode_mean(cond.xbar));
    Tensorf g3({1, 3, H, W});
    for (int ch = 0; ch < 3; ++ch)
      g3.flat().segment(Eigen::Index(ch) * H * W, Eigen::Index(H) * W) =
          cond.glyph.flat();
    cond.vae_glyph = vae_.normalize(vae_.encode_mean(g3));
    adaptor_.set_condition(cond);
    sampler.set_adaptor(&adaptor_);
  }
  if (gc.zeta1 > 0.0f) {
    sampler.set_ocr_target(&surrogate_, r.layout);
    r.used_ocr_guidance = true;
  }
  if (gc.zeta2 > 0.0f) {
    sampler.set_recompression(&codec_, xbar, glyph);
    r.used_recompression = true;
  }

  const auto t0 = std::chrono::steady_clock::now();
  r.image = sampler.sample(seed, &r.stats, H / 4, W / 4);
  r.sample_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.xbar = clamp01(xbar);
  return r;
}

DecodeResult Pipeline::decode(const std::vector<uint8_t>& bytes, uint64_t seed,
                              bool fast) {
  return decode(parse_container(bytes), seed, fast);
}

// ---------------------------------------------------------------------------
// Sweep

SweepOutcome run_sweep(const CorpusManifest& corpus, int begin, int end,
                       const std::vector<SweepItem>& items, uint64_t seed) {
  if (begin < 0 || end > corpus.count || begin >= end)
    throw std::invalid_argument("run_sweep: bad sample range");
  SweepOutcome out;
  for (const SweepItem& item : items) {
    char tag[64];
    std::snprintf(tag, sizeof tag, "%s lambda=%g", item.method.c_str(), item.lambda);
    std::unique_ptr<Pipeline> p;
    try {
      p = std::make_unique<Pipeline>(item.config);
    } catch (const std::exception& e) {
      out.skipped.push_back(std::string(tag) + ": " + e.what());
      continue;
    }
    double bpp = 0, ps = 0, jc = 0;
    int n = 0;
    for (int i = begin; i < end; ++i) {
      ScreenSample s = load_sample(corpus, i);
      EncodeResult enc = p->encode(s.image);
      Tensorf recon;
      if (item.decode_render) {
        recon = p->decode(enc.container, mix_seed(seed, uint64_t(i))).image;
      } else {
        Tensorf glyph = enc.container.mode == CodecMode::kScreen
                            ? render_glyph(enc.layout)
                            : Tensorf();
        recon = clamp01(p->codec().decode_image(enc.container.image_section, glyph));
      }
      bpp += enc.bpp;
      ps += double(psnr(recon, s.image));
      jc += double(jaccard_text(extract(recon).layout, s.layout));
      ++n;
    }
    SweepRow row;
    row.method = item.method;
    row.mode = mode_name(item.config.mode);
    row.lambda = item.lambda;
    row.bpp = bpp / n;
    row.psnr = ps / n;
    row.jaccard = jc / n;
    row.seed = seed;
    out.rows.push_back(row);
  }
  return out;
}

void write_rd_plots(const std::vector<SweepRow>& rows, const std::string& prefix) {
  static const float kPalette[6][3] = {
      {0.13f, 0.35f, 0.75f}, {0.85f, 0.33f, 0.10f}, {0.10f, 0.60f, 0.30f},
      {0.60f, 0.20f, 0.60f}, {0.80f, 0.60f, 0.10f}, {0.20f, 0.20f, 0.20f}};
  std::vector<std::string> methods;
  for (const SweepRow& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);

  auto build = [&](const char* metric, auto pick) {
    PlotSpec spec;
    spec.title = std::string("rate vs ") + metric;
    spec.x_label = "bpp";
    spec.y_label = metric;
    for (size_t m = 0; m < methods.size(); ++m) {
      PlotSeries s;
      s.label = methods[m];
      const float* rgb = kPalette[m % 6];
      s.rgb[0] = rgb[0];
      s.rgb[1] = rgb[1];
      s.rgb[2] = rgb[2];
      for (const SweepRow& r : rows)
        if (r.method == methods[m]) s.points.emplace_back(r.bpp, pick(r));
      spec.series.push_back(std::move(s));
    }
    return spec;
  };
  write_plot(prefix + "_psnr.png",
             build("psnr", [](const SweepRow& r) { return r.psnr; }));
  write_plot(prefix + "_jaccard.png",
             build("jaccard", [](const SweepRow& r) { return r.jaccard; }));
}

}  // namespace picd
